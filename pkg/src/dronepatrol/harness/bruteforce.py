"""Exhaustive COR maximisation over every discretized drone state."""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import env as E
from .. import geometry as geo
from ..relevance import RelevanceMap, penalty

DEFAULT_BUDGET = 16 ** 6


class BudgetExceededError(ValueError):
    pass


def _better(a, b):
    """Pick the better of two ``(cor, state)`` candidates; ties go to the smaller state."""
    if b is None:
        return a
    if a is None:
        return b
    if a[0] != b[0]:
        return a if a[0] > b[0] else b
    return a if a[1] <= b[1] else b


def _scan(rmap: RelevanceMap, config: E.EnvConfig, orientations):
    """Best candidate among all positions for the given (iz, ipsi, iphi, ifoc) tuples."""
    d = config.disc
    grid = config.grid
    best = None
    values = rmap.values
    for iz, ipsi, iphi, ifoc in orientations:
        pose0 = E.decode_state(E.DroneState(0, 0, iz, ipsi, iphi, ifoc), config)
        res = geo.footprint_offsets(pose0, config.intrinsics)
        if res is None:
            continue
        off, area = res
        k = penalty(area, config.penalty) if area > 0 else 0.0
        if k == 0.0:
            continue  # COR is exactly 0; the all-zero fallback handles it
        for ix in range(d):
            for iy in range(d):
                s = E.DroneState(ix, iy, iz, ipsi, iphi, ifoc)
                pose = E.decode_state(s, config)
                corners = off + np.array([pose.position[0], pose.position[2]])
                cells = geo.rasterize(geo.Footprint(corners, area, True), grid)
                if len(cells) == 0:
                    continue
                c = k * float(np.sum(values[cells.rows, cells.cols]))
                best = _better(best, (c, s))
    return best


def brute_force_search(rmap: RelevanceMap, config: E.EnvConfig, workers: int = 1,
                       budget: int = DEFAULT_BUDGET, chunks: int | None = None):
    """Argmax of COR (static map, untouched mask) over all ``disc**6`` states.

    Ties resolve to the lexicographically smallest ``(ix, iy, iz, ipsi, iphi,
    ifoc)``, so the answer does not depend on how work is partitioned.
    Returns ``(state, cor)``.
    """
    d = config.disc
    if d ** 6 > budget:
        raise BudgetExceededError(f"{d}^6 states exceed the budget of {budget}")
    if rmap.shape != config.grid.shape:
        raise ValueError("map shape does not match the configured grid")
    orientations = list(itertools.product(range(d), repeat=4))
    n_chunks = chunks or max(1, workers) * 4
    parts = [orientations[i::n_chunks] for i in range(n_chunks)]
    if workers <= 1:
        results = [_scan(rmap, config, p) for p in parts]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan, [rmap] * len(parts), [config] * len(parts), parts))
    best = None
    for r in results:
        best = _better(best, r)
    if best is None or best[0] <= 0.0:
        # every state scores 0: the smallest state wins the tie
        return E.DroneState(0, 0, 0, 0, 0, 0), 0.0
    return best[1], best[0]
