"""Naive boustrophedon patrol: vertical lane sweeps, then horizontal ones, then home."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .. import env as E
from ..relevance import penalty

_DELTA_TO_ACTION = {
    (1, 0): E.Action.MOVE_FORWARD,
    (-1, 0): E.Action.MOVE_BACKWARD,
    (0, 1): E.Action.MOVE_RIGHT,
    (0, -1): E.Action.MOVE_LEFT,
}


@dataclass(frozen=True)
class ZigzagPlan:
    waypoints: tuple[E.DroneState, ...]  # closed cycle: last == first

    def __post_init__(self):
        if len(self.waypoints) < 2 or self.waypoints[0] != self.waypoints[-1]:
            raise ValueError("zigzag plan must be a closed cycle")

    @property
    def start(self) -> E.DroneState:
        return self.waypoints[0]

    @property
    def period(self) -> int:
        return len(self.waypoints) - 1


def plateau_altitude_zoom(config: E.EnvConfig) -> tuple[int, int]:
    """(iz, ifoc) whose nadir footprint area is closest to the plateau midpoint."""
    p = config.penalty
    target = 0.5 * (p.a1 + p.a2)
    d = config.disc
    best = None
    for iz in range(d):
        for ifoc in range(d):
            cov = E.coverage(E.DroneState(d // 2, d // 2, iz, 0, d - 1, ifoc), config)
            key = (abs(cov.footprint.area - target), iz, ifoc)
            if best is None or key < best:
                best = key
    return best[1], best[2]


def _lanes(extent: float, d: int) -> list[int]:
    """Lane indices along one axis for a footprint ``extent`` index units wide.

    Lanes are spaced floor(extent) apart so neighbouring strips never leave
    a gap; the first and last lanes keep the strip flush with the borders.
    """
    spacing = max(1, int(math.floor(extent)))
    lanes = [max(0, int(math.floor(extent / 2 - 0.5)))]
    while lanes[-1] + 0.5 + extent / 2 < d and lanes[-1] < d - 1:
        lanes.append(min(lanes[-1] + spacing, d - 1))
    return lanes


def _walk(path: list[tuple[int, int]], target: tuple[int, int]) -> None:
    """Append unit steps to ``target``: first along ix, then along iy."""
    x, y = path[-1]
    tx, ty = target
    while x != tx:
        x += 1 if tx > x else -1
        path.append((x, y))
    while y != ty:
        y += 1 if ty > y else -1
        path.append((x, y))


def boustrophedon(cols: list[int], rows: list[int], d: int) -> list[tuple[int, int]]:
    """Closed unit-step (ix, iy) path: sweeps along ix on each column lane,
    then along iy on each row lane, then back to the start."""
    path = [(0, cols[0])]
    for j, c in enumerate(cols):
        _walk(path, (path[-1][0], c))
        _walk(path, (d - 1 if j % 2 == 0 else 0, c))
    if path[-1][0] != 0:
        rows = rows[::-1]
    for r in rows:
        _walk(path, (r, path[-1][1]))
        far = d - 1 if path[-1][1] < d / 2 else 0
        _walk(path, (r, far))
    _walk(path, path[0])
    dedup = [path[0]]
    for p in path[1:]:
        if p != dedup[-1]:
            dedup.append(p)
    return dedup


def zigzag_plan(config: E.EnvConfig, iz: int | None = None,
                ifoc: int | None = None) -> ZigzagPlan:
    d = config.disc
    if iz is None or ifoc is None:
        iz, ifoc = plateau_altitude_zoom(config)
    fp = E.coverage(E.DroneState(0, 0, iz, 0, d - 1, ifoc), config).footprint
    corners = fp.corners
    # at psi = 0 and nadir, world X (grid cols, iy) spans the sensor width
    # and world Z (grid rows, ix) the sensor height
    width_iy = (corners[:, 0].max() - corners[:, 0].min()) / config.move_step
    height_ix = (corners[:, 1].max() - corners[:, 1].min()) / config.move_step
    path = boustrophedon(_lanes(width_iy, d), _lanes(height_ix, d), d)
    states = tuple(E.DroneState(x, y, iz, 0, d - 1, ifoc) for x, y in path)
    return ZigzagPlan(states)


def zigzag_action(plan: ZigzagPlan, step: int) -> E.Action:
    """Action moving from waypoint ``step`` to the next one (cyclic)."""
    i = step % plan.period
    a, b = plan.waypoints[i], plan.waypoints[i + 1]
    return _DELTA_TO_ACTION[(b.ix - a.ix, b.iy - a.iy)]


def zigzag_k(plan: ZigzagPlan, config: E.EnvConfig) -> float:
    return penalty(E.coverage(plan.start, config).footprint.area, config.penalty)
