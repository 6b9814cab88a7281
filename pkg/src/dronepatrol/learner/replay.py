from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray

    def __post_init__(self):
        if not 0 <= self.action < 12:
            raise ValueError(f"action {self.action} out of range")
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")


class ReplayMemory:
    """Fixed-capacity ring buffer of transitions with uniform sampling.

    Storage is allocated lazily from the first observation's shape.
    """

    def __init__(self, capacity: int = 10_000, rng: np.random.Generator | None = None):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng()
        self._obs = self._next = None
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._size = 0
        self._head = 0

    def __len__(self) -> int:
        return self._size

    def push(self, tr: Transition) -> None:
        if self._obs is None:
            shape = (self.capacity,) + tuple(np.shape(tr.obs))
            self._obs = np.zeros(shape, dtype=np.float32)
            self._next = np.zeros(shape, dtype=np.float32)
        i = self._head
        self._obs[i] = tr.obs
        self._next[i] = tr.next_obs
        self._actions[i] = tr.action
        self._rewards[i] = tr.reward
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        replace = batch_size > self._size
        return self.rng.choice(self._size, size=batch_size, replace=replace)

    def sample(self, batch_size: int):
        """Returns ``(obs, actions, rewards, next_obs)`` arrays."""
        idx = self.sample_indices(batch_size)
        return self._obs[idx], self._actions[idx], self._rewards[idx], self._next[idx]

    def __getitem__(self, i: int) -> Transition:
        """Transition by age: 0 is the oldest item still stored."""
        if not 0 <= i < self._size:
            raise IndexError(i)
        j = (self._head - self._size + i) % self.capacity
        return Transition(self._obs[j].copy(), int(self._actions[j]),
                          float(self._rewards[j]), self._next[j].copy())
