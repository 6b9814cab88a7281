"""Relevance maps, temporal masks, COR and the global coverage metric."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CellSet, Footprint


@dataclass(frozen=True)
class RelevanceMap:
    values: np.ndarray  # (rows, cols), float64 in [0, 1]
    cell_size: float

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError("relevance map must be 2-D")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("relevance values must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass
class TemporalMask:
    values: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, shape) -> "TemporalMask":
        return cls(np.ones(shape, dtype=np.float64), 0)

    def copy(self) -> "TemporalMask":
        return TemporalMask(self.values.copy(), self.t)


@dataclass(frozen=True)
class PenaltyParams:
    a0: float
    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        if not 0 <= self.a0 <= self.a1 <= self.a2 <= self.a3:
            raise ValueError("penalty breakpoints must satisfy 0 <= a0 <= a1 <= a2 <= a3")

    @classmethod
    def from_fractions(cls, map_area: float, fractions=(0.005, 0.02, 0.10, 0.25)):
        return cls(*(f * map_area for f in fractions))


@dataclass(frozen=True)
class DecayParams:
    delta_minus: float = 0.1
    delta_plus: float = 0.005

    def __post_init__(self):
        if not (self.delta_minus > 0 and self.delta_plus > 0):
            raise ValueError("decay factors must be positive")
        if self.delta_plus >= self.delta_minus:
            raise ValueError("delta_plus must be smaller than delta_minus")


@dataclass(frozen=True)
class MapGenConfig:
    blobs: tuple[int, int] = (3, 8)
    sigma: tuple[float, float] = (3.0, 10.0)  # in cells
    rows: int = 64
    cols: int = 64
    cell_size: float = 16.0


def gaussian_blobs(shape, centers, sigmas) -> np.ndarray:
    """Sum of unit-peak isotropic Gaussians evaluated at integer cell indices."""
    rr, cc = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    out = np.zeros(shape, dtype=np.float64)
    for (r, c), s in zip(centers, sigmas):
        out += np.exp(-((rr - r) ** 2 + (cc - c) ** 2) / (2.0 * s * s))
    return out


def generate_random_map(seed, config: MapGenConfig = MapGenConfig()) -> RelevanceMap:
    """Random blobby relevance map, rescaled so its maximum is exactly 1.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(rng.integers(config.blobs[0], config.blobs[1] + 1))
    centers = np.column_stack([rng.uniform(0, config.rows, n),
                               rng.uniform(0, config.cols, n)])
    sigmas = rng.uniform(config.sigma[0], config.sigma[1], n)
    values = gaussian_blobs((config.rows, config.cols), centers, sigmas)
    values /= values.max()
    return RelevanceMap(values, config.cell_size)


def penalty(area: float, p: PenaltyParams) -> float:
    """Trapezoidal coverage-size factor in [0, 1]."""
    if area < p.a0 or area > p.a3:
        return 0.0
    if area < p.a1:
        return (area - p.a0) / (p.a1 - p.a0)
    if area <= p.a2:
        return 1.0
    if p.a3 == p.a2:
        return 0.0
    return (p.a3 - area) / (p.a3 - p.a2)


def _check_shapes(rmap: RelevanceMap, mask: TemporalMask):
    if rmap.shape != mask.values.shape:
        raise ValueError(f"map shape {rmap.shape} != mask shape {mask.values.shape}")


def observed_relevance(rmap: RelevanceMap, mask: TemporalMask, cells: CellSet) -> float:
    _check_shapes(rmap, mask)
    if len(cells) == 0:
        return 0.0
    r, c = cells.rows, cells.cols
    return float(np.sum(rmap.values[r, c] * mask.values[r, c]))


def cor(rmap: RelevanceMap, mask: TemporalMask, fp: Footprint, cells: CellSet,
        params: PenaltyParams) -> float:
    """Constrained observed relevance: penalty(area) times observed relevance."""
    if not fp.valid:
        return 0.0
    k = penalty(fp.area, params)
    if k == 0.0:
        return 0.0
    return k * observed_relevance(rmap, mask, cells)


def update_mask_single(mask: TemporalMask, cells: CellSet, k_value: float,
                       decay: DecayParams) -> TemporalMask:
    return update_mask_swarm(mask, [(cells, k_value)], decay)


def update_mask_swarm(mask: TemporalMask, per_drone, decay: DecayParams) -> TemporalMask:
    """One shared-mask step for a list of ``(CellSet, k)`` pairs.

    Uncovered cells recover by ``delta_plus``; covered cells lose the sum of
    ``k * delta_minus`` over every drone covering them.  A cell covered only
    by zero-k drones is left unchanged.
    """
    covered = np.zeros(mask.values.shape, dtype=bool)
    decrement = np.zeros(mask.values.shape, dtype=np.float64)
    for cells, k in per_drone:
        if len(cells) == 0:
            continue
        covered[cells.rows, cells.cols] = True
        decrement[cells.rows, cells.cols] += k * decay.delta_minus
    out = np.where(covered,
                   np.maximum(0.0, mask.values - decrement),
                   np.minimum(1.0, mask.values + decay.delta_plus))
    return TemporalMask(out, mask.t + 1)


def reward(cor_before: float, cor_after: float) -> float:
    return cor_after - cor_before


def global_coverage(rmap: RelevanceMap, mask: TemporalMask) -> float:
    """1 - (remaining temporal relevance) / (initial total relevance)."""
    _check_shapes(rmap, mask)
    total = rmap.total
    if total <= 0:
        raise ValueError("map has zero total relevance")
    return 1.0 - float(np.sum(rmap.values * mask.values)) / total


# ---------------------------------------------------------------------------
# persistence

_RMAP_MAGIC = b"RMAP"
_RMAP_HEADER = struct.Struct("<4sIIId")


def save_map(rmap: RelevanceMap, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        save_map_csv(rmap, path)
        return
    h, w = rmap.shape
    with open(path, "wb") as fh:
        fh.write(_RMAP_HEADER.pack(_RMAP_MAGIC, 1, w, h, float(rmap.cell_size)))
        fh.write(rmap.values.astype("<f4").tobytes(order="C"))


def load_map(path, cell_size: float = 16.0) -> RelevanceMap:
    """Load a binary ``.rmap`` file, or a CSV grid (``cell_size`` applies)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_map_csv(path, cell_size)
    data = path.read_bytes()
    if len(data) < _RMAP_HEADER.size:
        raise ValueError("truncated map file")
    magic, version, w, h, cs = _RMAP_HEADER.unpack_from(data)
    if magic != _RMAP_MAGIC:
        raise ValueError("not an RMAP file")
    if version != 1:
        raise ValueError(f"unsupported RMAP version {version}")
    body = data[_RMAP_HEADER.size:]
    if len(body) != 4 * w * h:
        raise ValueError("map payload size does not match header")
    values = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    return RelevanceMap(values, cs)


def save_map_csv(rmap: RelevanceMap, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rmap.values:
            writer.writerow([repr(float(v)) for v in row])


def load_map_csv(path, cell_size: float = 16.0) -> RelevanceMap:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return RelevanceMap(np.array(rows, dtype=np.float64), cell_size)
