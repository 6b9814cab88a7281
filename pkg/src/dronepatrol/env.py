"""Discrete drone-swarm patrolling MDP."""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from . import geometry as geo
from .relevance import (DecayParams, MapGenConfig, PenaltyParams, RelevanceMap,
                        TemporalMask, observed_relevance, penalty,
                        update_mask_swarm)


class Action(enum.IntEnum):
    MOVE_FORWARD = 0
    MOVE_BACKWARD = 1
    MOVE_LEFT = 2
    MOVE_RIGHT = 3
    MOVE_UP = 4
    MOVE_DOWN = 5
    ROTATE_LEFT = 6
    ROTATE_RIGHT = 7
    TILT_DOWN = 8
    TILT_UP = 9
    ZOOM_IN = 10
    ZOOM_OUT = 11


N_ACTIONS = len(Action)


class DroneState(NamedTuple):
    """Grid indices: ix, iy (ground position), iz (height), ipsi, iphi, ifoc."""
    ix: int
    iy: int
    iz: int
    ipsi: int
    iphi: int
    ifoc: int


@dataclass(frozen=True)
class EnvConfig:
    side: float = 1024.0  # meters, square world
    grid_cells: int = 64
    z_min: float = 20.0
    z_max: float = 200.0
    disc: int = 32
    intrinsics: geo.CameraIntrinsics = geo.CameraIntrinsics()
    penalty_fractions: tuple[float, float, float, float] = (0.005, 0.02, 0.10, 0.25)
    decay: DecayParams = DecayParams()
    episode_length: int = 20
    obs_size: int = 64
    obs_scale: float = 1.0  # map cells per window pixel
    map_blobs: tuple[int, int] = (3, 8)
    map_sigma: tuple[float, float] = (3.0, 10.0)

    def __post_init__(self):
        if self.disc < 2:
            raise ValueError("disc must be >= 2")
        if self.episode_length <= 0:
            raise ValueError("episode_length must be positive")
        if not 0 < self.z_min < self.z_max:
            raise ValueError("need 0 < z_min < z_max")

    @property
    def cell_size(self) -> float:
        return self.side / self.grid_cells

    @property
    def rotate_step(self) -> float:
        return 2.0 * math.pi / self.disc

    @property
    def move_step(self) -> float:
        return self.side / self.disc

    @property
    def grid(self) -> geo.GridSpec:
        return geo.GridSpec(self.grid_cells, self.grid_cells, self.cell_size)

    @property
    def penalty(self) -> PenaltyParams:
        return PenaltyParams.from_fractions(self.side * self.side, self.penalty_fractions)

    @property
    def map_gen(self) -> MapGenConfig:
        return MapGenConfig(self.map_blobs, self.map_sigma, self.grid_cells,
                            self.grid_cells, self.cell_size)


DESK_CONFIG = EnvConfig(side=512.0, grid_cells=32, disc=16, obs_size=32)


@dataclass
class SwarmState:
    drones: list[DroneState]
    mask: TemporalMask

    @property
    def t(self) -> int:
        return self.mask.t

    def copy(self) -> "SwarmState":
        return SwarmState(list(self.drones), self.mask.copy())


@dataclass(frozen=True)
class Coverage:
    """Cached per-state geometry: footprint, rasterized cells and penalty."""
    footprint: geo.Footprint
    cells: geo.CellSet
    k: float


# ---------------------------------------------------------------------------
# state decoding and transitions

def decode_state(s: DroneState, config: EnvConfig) -> geo.Pose:
    d = config.disc
    step = config.side / d
    x = (s.ix + 0.5) * step
    y = (s.iy + 0.5) * step
    h = config.z_min + s.iz * (config.z_max - config.z_min) / (d - 1)
    psi = (s.ipsi % d) * config.rotate_step
    phi = (math.pi / 2) if s.iphi == d - 1 else s.iphi * (math.pi / 2) / (d - 1)
    fi = config.intrinsics
    f = fi.focal_min + s.ifoc * (fi.focal_max - fi.focal_min) / (d - 1)
    # ground x runs along world Z (grid rows), ground y along world X (cols)
    return geo.Pose((y, h, x), psi, phi, f)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@lru_cache(maxsize=None)
def _heading_deltas(ipsi: int, disc: int) -> dict[Action, tuple[int, int]]:
    psi = (ipsi % disc) * 2.0 * math.pi / disc
    fwd = (_round_half_up(math.cos(psi)), _round_half_up(math.sin(psi)))
    # "left" is the side RotateLeft (decreasing psi) turns toward
    left = (_round_half_up(math.sin(psi)), _round_half_up(-math.cos(psi)))
    return {
        Action.MOVE_FORWARD: fwd,
        Action.MOVE_BACKWARD: (-fwd[0], -fwd[1]),
        Action.MOVE_LEFT: left,
        Action.MOVE_RIGHT: (-left[0], -left[1]),
    }


def _clamped(i: int, delta: int, d: int) -> int:
    j = i + delta
    return j if 0 <= j < d else i


_INDEX_ACTIONS = {
    Action.MOVE_UP: (2, 1), Action.MOVE_DOWN: (2, -1),
    Action.TILT_DOWN: (4, 1), Action.TILT_UP: (4, -1),
    Action.ZOOM_IN: (5, 1), Action.ZOOM_OUT: (5, -1),
}


def apply_action(s: DroneState, action, config: EnvConfig) -> DroneState:
    action = Action(action)
    d = config.disc
    if action in _INDEX_ACTIONS:
        pos, delta = _INDEX_ACTIONS[action]
        idx = list(s)
        idx[pos] = _clamped(idx[pos], delta, d)
        return DroneState(*idx)
    if action is Action.ROTATE_LEFT:
        return s._replace(ipsi=(s.ipsi - 1) % d)
    if action is Action.ROTATE_RIGHT:
        return s._replace(ipsi=(s.ipsi + 1) % d)
    dx, dy = _heading_deltas(s.ipsi, d)[action]
    return s._replace(ix=_clamped(s.ix, dx, d), iy=_clamped(s.iy, dy, d))


def random_state(rng: np.random.Generator, config: EnvConfig) -> DroneState:
    """Uniformly random state whose footprint is valid."""
    while True:
        s = DroneState(*(int(v) for v in rng.integers(0, config.disc, 6)))
        if coverage(s, config).footprint.valid:
            return s


@lru_cache(maxsize=200_000)
def coverage(s: DroneState, config: EnvConfig) -> Coverage:
    fp = geo.footprint(decode_state(s, config), config.intrinsics)
    cells = geo.rasterize(fp, config.grid)
    k = penalty(fp.area, config.penalty) if fp.valid else 0.0
    return Coverage(fp, cells, k)


def state_cor(s: DroneState, rmap: RelevanceMap, mask: TemporalMask,
              config: EnvConfig) -> float:
    cov = coverage(s, config)
    if cov.k == 0.0:
        return 0.0
    return cov.k * observed_relevance(rmap, mask, cov.cells)


def swarm_cors(swarm: SwarmState, rmap: RelevanceMap, config: EnvConfig) -> np.ndarray:
    return np.array([state_cor(s, rmap, swarm.mask, config) for s in swarm.drones])


def new_swarm(drones: Sequence[DroneState], shape) -> SwarmState:
    return SwarmState(list(drones), TemporalMask.fresh(shape))


def step_swarm(swarm: SwarmState, actions, rmap: RelevanceMap, config: EnvConfig,
               update_mask: bool = True):
    """Advance every drone simultaneously and update the shared mask once.

    Returns ``(next_swarm, rewards)``; reward i is drone i's COR on the new
    mask minus its COR before acting.  With ``update_mask=False`` the mask is
    frozen (only ``t`` advances).
    """
    actions = list(actions)
    if len(actions) != len(swarm.drones):
        raise ValueError(f"got {len(actions)} actions for {len(swarm.drones)} drones")
    before = swarm_cors(swarm, rmap, config)
    drones = [apply_action(s, a, config) for s, a in zip(swarm.drones, actions)]
    if update_mask:
        covs = [coverage(s, config) for s in drones]
        mask = update_mask_swarm(swarm.mask, [(c.cells, c.k) for c in covs], config.decay)
    else:
        mask = TemporalMask(swarm.mask.values, swarm.mask.t + 1)
    nxt = SwarmState(drones, mask)
    after = swarm_cors(nxt, rmap, config)
    return nxt, after - before


# ---------------------------------------------------------------------------
# observations

@lru_cache(maxsize=8)
def _window_offsets(size: int, scale: float):
    o = (np.arange(size, dtype=np.float64) - size / 2 + 0.5) * scale
    dr, dc = np.meshgrid(o, o, indexing="ij")
    return dr, dc


def window_points(center_rc, psi: float, size: int = 64, scale: float = 1.0):
    """Map coordinates (in cell units) sampled by each window pixel.

    Window rows run along the facing direction, so a drone heading ``psi``
    always looks "along +row" in its own window.
    """
    dr, dc = _window_offsets(size, scale)
    c, s = math.cos(psi), math.sin(psi)
    mr = center_rc[0] + dr * c - dc * s
    mc = center_rc[1] + dr * s + dc * c
    return mr, mc


def sample_grid(values: np.ndarray, mr: np.ndarray, mc: np.ndarray) -> np.ndarray:
    """Nearest-cell lookup with zeros outside the grid."""
    ri = np.floor(mr).astype(np.intp)
    ci = np.floor(mc).astype(np.intp)
    ok = (ri >= 0) & (ri < values.shape[0]) & (ci >= 0) & (ci < values.shape[1])
    out = np.zeros(mr.shape, dtype=values.dtype)
    out[ok] = values[ri[ok], ci[ok]]
    return out


def window_pixels(center_rc, psi: float, points_rc, size: int = 64, scale: float = 1.0):
    """Window (row, col) pixels containing map points given in cell units.

    Inverse of :func:`window_points`; points outside the window are dropped.
    """
    p = np.asarray(points_rc, dtype=np.float64).reshape(-1, 2)
    d0, d1 = p[:, 0] - center_rc[0], p[:, 1] - center_rc[1]
    c, s = math.cos(psi), math.sin(psi)
    i = np.floor((d0 * c + d1 * s) / scale + size / 2).astype(np.intp)
    j = np.floor((d1 * c - d0 * s) / scale + size / 2).astype(np.intp)
    ok = (i >= 0) & (i < size) & (j >= 0) & (j < size)
    return i[ok], j[ok]


def _footprint_channel(fp: geo.Footprint, center, psi, gx, gz, config: EnvConfig):
    """Binary footprint raster in the window frame.

    Pixels whose sample point lies inside the footprint, plus the pixels
    holding its corners, so footprints smaller than a pixel stay visible.
    """
    out = geo.points_in_footprint(fp, gx, gz)
    if fp.valid:
        corners_rc = fp.corners[:, ::-1] / config.cell_size
        i, j = window_pixels(center, psi, corners_rc, config.obs_size, config.obs_scale)
        out[i, j] = True
    return out


def encode_observation(swarm: SwarmState, drone_index: int, rmap: RelevanceMap,
                       mode: str, config: EnvConfig) -> np.ndarray:
    """Egocentric ``(size, size, C)`` float32 tensor, C = 2 (greedy) or 3 (coop)."""
    if mode not in ("greedy", "coop"):
        raise ValueError(f"unknown mode {mode!r}")
    s = swarm.drones[drone_index]
    pose = decode_state(s, config)
    cs = config.cell_size
    center = (pose.position[2] / cs, pose.position[0] / cs)
    mr, mc = window_points(center, pose.azimuth, config.obs_size, config.obs_scale)
    temporal = rmap.values * swarm.mask.values
    channels = [sample_grid(temporal, mr, mc)]
    gx, gz = mc * cs, mr * cs
    own = _footprint_channel(coverage(s, config).footprint, center, pose.azimuth, gx, gz, config)
    channels.append(own)
    if mode == "coop":
        union = own.copy()
        for j, other in enumerate(swarm.drones):
            if j != drone_index:
                union |= _footprint_channel(coverage(other, config).footprint, center,
                                            pose.azimuth, gx, gz, config)
        channels.append(union)
    return np.stack(channels, axis=-1).astype(np.float32)


def obs_channels(mode: str) -> int:
    return {"greedy": 2, "coop": 3}[mode]


# ---------------------------------------------------------------------------
# shortest action paths

def _planar_distance(a: DroneState, b: DroneState, d: int) -> int:
    """BFS over (ix, iy, ipsi): the only indices whose moves interact."""
    start = (a.ix, a.iy, a.ipsi % d)
    goal = (b.ix, b.iy, b.ipsi % d)
    if start == goal:
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    moves = (Action.MOVE_FORWARD, Action.MOVE_BACKWARD, Action.MOVE_LEFT, Action.MOVE_RIGHT)
    while frontier:
        (x, y, p), dist = frontier.popleft()
        deltas = _heading_deltas(p, d)
        nbrs = [(x, y, (p - 1) % d), (x, y, (p + 1) % d)]
        for m in moves:
            dx, dy = deltas[m]
            nbrs.append((_clamped(x, dx, d), _clamped(y, dy, d), p))
        for n in nbrs:
            if n == goal:
                return dist + 1
            if n not in seen:
                seen.add(n)
                frontier.append((n, dist + 1))
    raise RuntimeError("goal unreachable")  # pragma: no cover


def min_state_distance(a: DroneState, b: DroneState, config: EnvConfig) -> int:
    """Fewest actions turning state ``a`` into ``b``.

    Height, tilt and zoom are independent unit steps; position and heading
    interact (moves follow the heading, diagonal headings move both
    coordinates), so that part is solved exactly by breadth-first search.
    """
    d = config.disc
    rest = abs(a.iz - b.iz) + abs(a.iphi - b.iphi) + abs(a.ifoc - b.ifoc)
    return rest + _planar_distance(a, b, d)


def cyclic_distance(i: int, j: int, d: int) -> int:
    delta = abs(i - j) % d
    return min(delta, d - delta)
