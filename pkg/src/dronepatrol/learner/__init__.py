from .dqn import (TrainConfig, TrainResult, batch_targets, double_dqn_target, epsilon_at,
                  select_action, target_network_target, train_batch, train_run)
from .network import (Adam, DivergenceError, NetworkParams, forward, init_params,
                      load_weights, loss_and_grads, save_weights, soft_update)
from .replay import ReplayMemory, Transition
from .tabular import TabularMDP, q_iteration
