from .bruteforce import BudgetExceededError, brute_force_search
from .config import load_config, parse_config, resolve_seed
from .experiments import (ExperimentReport, convergence_experiment, inference_timing,
                          patrol_comparison, rollout, swarm_comparison)
from .zigzag import ZigzagPlan, zigzag_action, zigzag_plan
