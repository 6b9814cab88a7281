"""Double DQN training for greedy and cooperative swarm policies."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .. import env as E
from ..relevance import generate_random_map
from .network import (Adam, DivergenceError, NetworkParams, forward, init_params,
                      loss_and_grads, soft_update)
from .replay import ReplayMemory, Transition

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    batch_size: int = 64
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100_000
    alpha: float = 0.001
    eps_start: float = 1.0
    eps_end: float = 0.1
    replay_capacity: int = 10_000
    drones: tuple[int, int] = (1, 5)
    updates_per_epoch: int = 1
    target_rule: str = "double"  # or "target"
    grad_clip: float | None = None
    filters: int = 16
    kernel: int = 8
    stride: int = 2
    hidden: tuple[int, int] = (1024, 1024)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch larger than replay memory")
        if self.target_rule not in ("double", "target"):
            raise ValueError(f"unknown target rule {self.target_rule!r}")


GREEDY_EPOCHS = 100_000
COOP_EPOCHS = 300_000


def epsilon_at(epoch: int, epochs: int, start: float = 1.0, end: float = 0.1) -> float:
    """Linear exploration schedule hitting ``start`` at epoch 0 and ``end`` at the last."""
    if epochs <= 1:
        return end
    if epoch <= 0:
        return start
    if epoch >= epochs - 1:
        return end
    return start + (end - start) * epoch / (epochs - 1)


def greedy_action(q: np.ndarray) -> int:
    return int(np.argmax(q))  # first maximum wins ties


def select_action(params: NetworkParams, obs: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(E.N_ACTIONS))
    return greedy_action(forward(params, obs))


def double_dqn_target(online: NetworkParams, target: NetworkParams, tr: Transition,
                      gamma: float) -> float:
    a_star = greedy_action(forward(online, tr.next_obs))
    return float(tr.reward + gamma * forward(target, tr.next_obs)[a_star])


def target_network_target(target: NetworkParams, tr: Transition, gamma: float) -> float:
    return float(tr.reward + gamma * np.max(forward(target, tr.next_obs)))


def batch_targets(online: NetworkParams, target: NetworkParams, rewards: np.ndarray,
                  next_obs: np.ndarray, gamma: float, rule: str = "double") -> np.ndarray:
    q_t = forward(target, next_obs).astype(np.float64)
    if rule == "target":
        return rewards + gamma * q_t.max(axis=1)
    a_star = np.argmax(forward(online, next_obs), axis=1)
    return rewards + gamma * q_t[np.arange(len(a_star)), a_star]


def train_batch(online: NetworkParams, target: NetworkParams, batch, config: TrainConfig,
                adam: Adam) -> float:
    """One Adam step on a batch ``(obs, actions, rewards, next_obs)``.

    Updates ``online`` in place and returns the pre-update loss.
    """
    obs, actions, rewards, next_obs = batch
    if len(actions) == 0:
        raise ValueError("empty batch")
    y = batch_targets(online, target, np.asarray(rewards, dtype=np.float64), next_obs,
                      config.gamma, config.target_rule)
    loss, grads = loss_and_grads(online, obs, np.asarray(actions), y)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    if config.grad_clip is not None:
        norm = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
        if norm > config.grad_clip:
            scale = config.grad_clip / norm
            grads = {k: g * scale for k, g in grads.items()}
    adam.step(online, grads)
    return loss


@dataclass
class EpochLog:
    epoch: int
    epsilon: float
    loss: float
    mean_reward: float
    wall_ms: float
    drones: int = 0


@dataclass
class TrainResult:
    params: NetworkParams
    target: NetworkParams
    log: list[EpochLog] = field(default_factory=list)
    replay: ReplayMemory | None = None


class RngStreams:
    """Independent generators split from one master seed (Philox, counter-based)."""

    NAMES = ("init", "maps", "drones", "explore", "replay")

    def __init__(self, seed: int):
        children = np.random.SeedSequence(int(seed)).spawn(len(self.NAMES))
        for name, ss in zip(self.NAMES, children):
            setattr(self, name, np.random.Generator(np.random.Philox(ss)))


def policy_actions(params: NetworkParams, obs: list[np.ndarray], epsilon: float,
                   rng: np.random.Generator) -> list[int]:
    """Epsilon-greedy actions for a group of drones, one forward pass for all.

    Draws a fixed number of random values per call so the stream position
    does not depend on which branch is taken.
    """
    n = len(obs)
    explore = rng.random(n) < epsilon
    random_actions = rng.integers(0, E.N_ACTIONS, n)
    actions = [int(a) for a in random_actions]
    exploit = np.flatnonzero(~explore)
    if len(exploit):
        q = forward(params, np.stack([obs[i] for i in exploit]))
        for j, i in enumerate(exploit):
            actions[i] = greedy_action(q[j])
    return actions


def train_run(mode: str, config: TrainConfig, env_config: E.EnvConfig, seed: int,
              epochs: int | None = None, init: NetworkParams | None = None,
              progress_every: int = 0) -> TrainResult:
    """Full training loop; deterministic for a fixed seed.

    Each epoch draws a fresh random map and 1-5 drones, rolls 20 swarm steps
    with epsilon-greedy actions, pushes one transition per drone per step,
    then takes one batch update followed by one soft target update.
    """
    epochs = config.epochs if epochs is None else epochs
    channels = E.obs_channels(mode)
    rngs = RngStreams(seed)
    online = init.copy() if init is not None else init_params(
        channels, rngs.init, obs_size=env_config.obs_size, filters=config.filters,
        kernel=config.kernel, stride=config.stride, hidden=config.hidden)
    target = online.copy()
    adam = Adam(online, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    replay = ReplayMemory(config.replay_capacity, rngs.replay)
    result = TrainResult(online, target, [], replay)
    gen_cfg = env_config.map_gen

    for epoch in range(epochs):
        t0 = time.perf_counter()
        eps = epsilon_at(epoch, epochs, config.eps_start, config.eps_end)
        rmap = generate_random_map(rngs.maps, gen_cfg)
        n = int(rngs.drones.integers(config.drones[0], config.drones[1] + 1))
        swarm = E.new_swarm([E.random_state(rngs.drones, env_config) for _ in range(n)],
                            rmap.shape)
        obs = [E.encode_observation(swarm, i, rmap, mode, env_config) for i in range(n)]
        rewards_sum = 0.0
        for _ in range(env_config.episode_length):
            actions = policy_actions(online, obs, eps, rngs.explore)
            swarm, rewards = E.step_swarm(swarm, actions, rmap, env_config)
            nxt = [E.encode_observation(swarm, i, rmap, mode, env_config) for i in range(n)]
            for i in range(n):
                replay.push(Transition(obs[i], actions[i], float(rewards[i]), nxt[i]))
            rewards_sum += float(rewards.sum())
            obs = nxt
        loss = float("nan")
        if len(replay) >= config.batch_size:
            losses = []
            for _ in range(config.updates_per_epoch):
                losses.append(train_batch(online, target, replay.sample(config.batch_size),
                                          config, adam))
                soft_update(target, online, config.alpha)
            loss = float(np.mean(losses))
        entry = EpochLog(epoch, eps, loss, rewards_sum / (n * env_config.episode_length),
                         (time.perf_counter() - t0) * 1e3, n)
        result.log.append(entry)
        if progress_every and (epoch + 1) % progress_every == 0:
            recent = result.log[-progress_every:]
            log.info("epoch %d eps %.3f loss %.4g reward %.4g (%.0f ms/epoch)",
                     epoch + 1, eps, np.nanmean([e.loss for e in recent]),
                     np.mean([e.mean_reward for e in recent]),
                     np.mean([e.wall_ms for e in recent]))
    return result
