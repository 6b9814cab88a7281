"""Camera footprint geometry.

World frame: Y points up, the ground is the plane y = 0, and ground points
are expressed as ``(x, z)``.  The camera frame starts with its optical axis
along +Z (pointing at the horizon); azimuth rotates about Y and tilt about X.

Grid convention used by :func:`rasterize`: cell ``(row, col)`` covers
``z in [row*cs, (row+1)*cs)`` and ``x in [col*cs, (col+1)*cs)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# |p_y| below this is treated as a ray parallel to the ground.
HORIZON_EPS = 1e-12


class HorizonError(ValueError):
    """The pixel ray does not intersect the ground in front of the camera."""


@dataclass(frozen=True)
class CameraIntrinsics:
    sensor_half_width: float = 3.2e-3
    sensor_half_height: float = 2.4e-3
    focal_min: float = 4e-3
    focal_max: float = 48e-3

    def __post_init__(self):
        if not 0 < self.focal_min < self.focal_max:
            raise ValueError("need 0 < focal_min < focal_max")
        if self.sensor_half_width <= 0 or self.sensor_half_height <= 0:
            raise ValueError("sensor half sizes must be positive")

    @property
    def image_corners(self) -> np.ndarray:
        """Sensor corners in meters, in a fixed cyclic order (4 x 2)."""
        w, h = self.sensor_half_width, self.sensor_half_height
        return np.array([[-w, -h], [w, -h], [w, h], [-w, h]], dtype=np.float64)


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]  # (Cx, Cy, Cz), Cy = height
    azimuth: float
    tilt: float
    focal: float

    def __post_init__(self):
        if self.position[1] <= 0:
            raise ValueError("camera height must be positive")
        if not 0.0 <= self.tilt <= math.pi / 2 + 1e-12:
            raise ValueError("tilt must lie in [0, pi/2]")


@dataclass(frozen=True)
class Footprint:
    corners: np.ndarray  # (4, 2) ground points (x, z); zeros when invalid
    area: float
    valid: bool

    @classmethod
    def invalid(cls) -> "Footprint":
        return cls(np.zeros((4, 2)), 0.0, False)


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    cell_size: float

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True)
class CellSet:
    shape: tuple[int, int]
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    def __len__(self) -> int:
        return len(self.rows)

    def as_set(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.rows, self.cols] = True
        return m


def rotation_matrix(azimuth: float, tilt: float) -> np.ndarray:
    """Return ``R_psi @ R_phi``: tilt about X first, then azimuth about Y.

    Increasing tilt turns the optical axis toward the ground, so
    ``tilt = pi/2`` looks straight down.
    """
    cp, sp = math.cos(azimuth), math.sin(azimuth)
    ct, st = math.cos(tilt), math.sin(tilt)
    r_psi = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    r_phi = np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])
    return r_psi @ r_phi


def _ray_offsets(pose: Pose, pixels: np.ndarray) -> np.ndarray:
    """Ground offsets of pixel rays relative to the camera's ground point.

    Raises HorizonError if any ray fails to hit the ground.
    """
    pixels = np.atleast_2d(pixels)
    rays = np.column_stack([pixels, np.full(len(pixels), pose.focal)])
    rays = rays @ rotation_matrix(pose.azimuth, pose.tilt).T
    ry = rays[:, 1]
    if np.any(ry > -HORIZON_EPS):
        raise HorizonError("pixel ray at or above the horizon")
    t = -pose.position[1] / ry
    return np.column_stack([t * rays[:, 0], t * rays[:, 2]])


def project_pixel(pose: Pose, intrinsics: CameraIntrinsics, pixel) -> np.ndarray:
    """Intersect the ray through ``pixel`` (sensor meters) with the ground.

    Returns the ground point ``(x, z)``.
    """
    del intrinsics  # pixel is already in sensor meters
    off = _ray_offsets(pose, np.asarray(pixel, dtype=np.float64))[0]
    return np.array([pose.position[0] + off[0], pose.position[2] + off[1]])


def shoelace_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def footprint_offsets(pose: Pose, intrinsics: CameraIntrinsics):
    """Corner offsets from the camera ground point and the footprint area.

    Both depend only on height, azimuth, tilt and focal length, so callers
    sweeping over positions can reuse them.  Returns ``None`` if the
    footprint is invalid.
    """
    try:
        off = _ray_offsets(pose, intrinsics.image_corners)
    except HorizonError:
        return None
    return off, shoelace_area(off)


def footprint(pose: Pose, intrinsics: CameraIntrinsics) -> Footprint:
    res = footprint_offsets(pose, intrinsics)
    if res is None:
        return Footprint.invalid()
    off, area = res
    corners = off + np.array([pose.position[0], pose.position[2]])
    return Footprint(corners, area, area > 0)


def _inside_convex(corners: np.ndarray, px: np.ndarray, pz: np.ndarray,
                   tol: float) -> np.ndarray:
    """Vectorized boundary-inclusive point-in-convex-polygon test."""
    inside_pos = np.ones(px.shape, dtype=bool)
    inside_neg = np.ones(px.shape, dtype=bool)
    for i in range(len(corners)):
        ax, az = corners[i]
        bx, bz = corners[(i + 1) % len(corners)]
        cross = (bx - ax) * (pz - az) - (bz - az) * (px - ax)
        inside_pos &= cross >= -tol
        inside_neg &= cross <= tol
    return inside_pos | inside_neg


def points_in_footprint(fp: Footprint, px, pz) -> np.ndarray:
    """Boolean mask of ground points ``(px, pz)`` lying inside ``fp``."""
    px = np.asarray(px, dtype=np.float64)
    pz = np.asarray(pz, dtype=np.float64)
    if not fp.valid:
        return np.zeros(np.broadcast(px, pz).shape, dtype=bool)
    return _inside_convex(fp.corners, px, pz, _edge_tol(fp.corners))


def _edge_tol(corners: np.ndarray) -> float:
    # scales the boundary tolerance with the polygon's size
    span = float(np.max(np.abs(corners))) + 1.0
    return 1e-9 * span * span


def rasterize(fp: Footprint, grid: GridSpec) -> CellSet:
    """Cells whose center lies inside the footprint, in row-major order."""
    if not fp.valid:
        return CellSet(grid.shape)
    cs = grid.cell_size
    xs, zs = fp.corners[:, 0], fp.corners[:, 1]
    c0 = max(int(math.floor(xs.min() / cs - 0.5)), 0)
    c1 = min(int(math.ceil(xs.max() / cs - 0.5)), grid.cols - 1)
    r0 = max(int(math.floor(zs.min() / cs - 0.5)), 0)
    r1 = min(int(math.ceil(zs.max() / cs - 0.5)), grid.rows - 1)
    if c0 > c1 or r0 > r1:
        return CellSet(grid.shape)
    rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    inside = _inside_convex(fp.corners, (cc + 0.5) * cs, (rr + 0.5) * cs,
                            _edge_tol(fp.corners))
    return CellSet(grid.shape, rr[inside], cc[inside])
