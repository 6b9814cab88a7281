"""Tabular Q-iteration for small deterministic MDPs (a Bellman oracle)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TabularMDP:
    next_state: np.ndarray  # (S, A) int
    reward: np.ndarray  # (S, A) float

    def __post_init__(self):
        if self.next_state.shape != self.reward.shape:
            raise ValueError("next_state and reward must have the same shape")
        if self.next_state.size > 1000:
            raise ValueError("tabular oracle limited to 1000 state-action pairs")


def q_iteration(mdp: TabularMDP, gamma: float, iterations: int = 100_000,
                tol: float = 1e-12, history: list | None = None) -> np.ndarray:
    """Iterate ``Q(s,a) <- r(s,a) + gamma * max_a' Q(s',a')`` from zeros.

    Stops when the sup-norm change falls below ``tol``.  If ``history`` is
    given, each iterate is appended to it.
    """
    q = np.zeros(mdp.reward.shape, dtype=np.float64)
    for _ in range(iterations):
        nq = mdp.reward + gamma * q.max(axis=1)[mdp.next_state]
        delta = np.max(np.abs(nq - q))
        q = nq
        if history is not None:
            history.append(q.copy())
        if delta < tol:
            break
    return q
