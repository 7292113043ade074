"""Spherical bucket geometry: block intersection fractions and dig-location sampling.

Sphere/box overlap has no convenient closed form, so volumes are estimated by
counting a fixed low-discrepancy point set of ``N_BALL_POINTS`` points that
fills the unit ball. The set is generated once from a seeded scrambled Sobol
sequence and reused everywhere, so fractions are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

from .blocks import Block, BlockModel
from .errors import BucketOutsideModel, NoSampledLocations

N_BALL_POINTS = 4096
_BALL_SEED = 20210
# grid points closer than this (relative to the interval) to a limit count as inside
_GRID_EPS = 1e-9
_SNAP_DECIMALS = 9
_COUNT_MEMO: dict[tuple, np.ndarray] = {}
_COUNT_MEMO_MAX = 200_000


@dataclass(frozen=True)
class BucketShape:
    """Bucket modelled as a sphere of fixed volume (m^3)."""

    volume: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.volume) and self.volume > 0):
            raise ValueError(f"bucket volume must be positive, got {self.volume}")

    @property
    def radius(self) -> float:
        return (3.0 * self.volume / (4.0 * math.pi)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class SampledLocation:
    """Grid point around a recorded dig position."""

    position: tuple[float, float, float]
    distance_to_recorded: float
    grid_index: tuple[int, int, int] = (0, 0, 0)


@lru_cache(maxsize=1)
def unit_ball_points() -> np.ndarray:
    """Fixed (4096, 3) point set, uniform in the open unit ball.

    Sobol points in the cube are pushed through the volume-preserving map
    (u, v, w) -> radius u^(1/3), cos(polar) 1 - 2v, azimuth 2 pi w.
    """
    u = qmc.Sobol(d=3, scramble=True, seed=_BALL_SEED).random_base2(int(math.log2(N_BALL_POINTS)))
    r = np.cbrt(u[:, 0])
    cos_t = 1.0 - 2.0 * u[:, 1]
    sin_t = np.sqrt(np.clip(1.0 - cos_t * cos_t, 0.0, None))
    phi = 2.0 * math.pi * u[:, 2]
    pts = np.column_stack([r * sin_t * np.cos(phi), r * sin_t * np.sin(phi), r * cos_t])
    pts.flags.writeable = False
    return pts


def _box_status(center: np.ndarray, radius: float, lo: np.ndarray, hi: np.ndarray) -> int:
    """-1 disjoint, 1 sphere contained in box, 0 partial."""
    if np.any(hi <= lo):
        return -1
    if np.any(center + radius <= lo) or np.any(center - radius >= hi):
        return -1
    nearest = np.clip(center, lo, hi)
    if float(np.sum((nearest - center) ** 2)) >= radius * radius:
        return -1
    if np.all(center - radius >= lo) and np.all(center + radius <= hi):
        return 1
    return 0


def _relative(center: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # box faces relative to the sphere centre, snapped to a nanometre grid so
    # that counts depend only on the relative layout
    return np.round(lo - center, _SNAP_DECIMALS), np.round(hi - center, _SNAP_DECIMALS)


def _relative_counts(radius: float, rel_lo: np.ndarray, rel_hi: np.ndarray) -> np.ndarray:
    key = (radius, rel_lo.tobytes(), rel_hi.tobytes())
    hit = _COUNT_MEMO.get(key)
    if hit is None:
        if len(_COUNT_MEMO) >= _COUNT_MEMO_MAX:
            _COUNT_MEMO.clear()
        hit = box_counts(radius * unit_ball_points(), rel_lo, rel_hi)
        hit.flags.writeable = False
        _COUNT_MEMO[key] = hit
    return hit


def box_fraction(bucket: BucketShape, center, lo, hi) -> float:
    """Fraction of the bucket sphere inside the half-open box ``[lo, hi)``."""
    c = np.asarray(center, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    status = _box_status(c, bucket.radius, lo, hi)
    if status < 0:
        return 0.0
    if status > 0:
        return 1.0
    rel_lo, rel_hi = _relative(c, lo[None, :], hi[None, :])
    return int(_relative_counts(bucket.radius, rel_lo, rel_hi)[0]) / N_BALL_POINTS


def intersection_fraction(bucket: BucketShape, center, block: Block) -> float:
    """Vol(sphere at ``center`` intersected with ``block``) / Vol(sphere)."""
    c = np.asarray(block.centroid, dtype=float)
    half = 0.5 * np.asarray(block.dims, dtype=float)
    return box_fraction(bucket, center, c - half, c + half)


def box_counts(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Number of ``points`` inside each half-open box ``[lo_k, hi_k)``.

    Points are binned on the grid formed by all box faces; each box then reads
    its count from a 3-D summed-area table. Boxes must not overlap for the
    counts to be meaningful as volume shares, but each count is exact either way.
    """
    k = lo.shape[0]
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    cell = []
    bounds = []
    shape = []
    valid = np.ones(points.shape[0], dtype=bool)
    for a in range(3):
        edges = np.unique(np.concatenate([lo[:, a], hi[:, a]]))
        idx = np.searchsorted(edges, points[:, a], side="right") - 1
        valid &= (idx >= 0) & (idx < edges.size - 1)
        cell.append(idx)
        bounds.append((np.searchsorted(edges, lo[:, a]), np.searchsorted(edges, hi[:, a])))
        shape.append(max(edges.size - 1, 1))
    flat = np.ravel_multi_index(tuple(c[valid] for c in cell), shape)
    hist = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    table = np.zeros([s + 1 for s in shape], dtype=np.int64)
    table[1:, 1:, 1:] = hist.cumsum(0).cumsum(1).cumsum(2)
    (x0, x1), (y0, y1), (z0, z1) = bounds
    return (
        table[x1, y1, z1] - table[x0, y1, z1] - table[x1, y0, z1] - table[x1, y1, z0]
        + table[x0, y0, z1] + table[x0, y1, z0] + table[x1, y0, z0] - table[x0, y0, z0]
    )


def intersect_rows(center, radius: float, model: BlockModel, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Block rows touched by the sphere and their point counts (out of 4096).

    Rows are returned in the order given, restricted to positive counts.
    """
    c = np.asarray(center, dtype=float)
    rows = np.asarray(rows, dtype=np.int64)
    lo = model.lo[rows]
    hi = model.hi[rows]
    # cheap AABB rejection before point counting
    near = np.all((lo < c + radius) & (hi > c - radius), axis=1)
    rows, lo, hi = rows[near], lo[near], hi[near]
    if rows.size == 0:
        return rows, np.zeros(0, dtype=np.int64)
    rel_lo, rel_hi = _relative(c, lo, hi)
    counts = _relative_counts(radius, rel_lo, rel_hi)
    keep = counts > 0
    return rows[keep], counts[keep]


def volume_fractions(center, bucket: BucketShape, model: BlockModel, candidate_ids) -> tuple[list[int], np.ndarray]:
    """Intersecting block ids (sorted) and their bucket fractions, renormalised to sum to 1.

    Raises
    ------
    BucketOutsideModel
        If no candidate block intersects the bucket.
    """
    rows = model.rows(candidate_ids)
    rows, counts = intersect_rows(center, bucket.radius, model, rows)
    if rows.size == 0:
        raise BucketOutsideModel(f"bucket at {tuple(np.round(center, 3))} intersects no block")
    order = np.argsort(model.ids[rows], kind="stable")
    rows, counts = rows[order], counts[order]
    return [int(i) for i in model.ids[rows]], counts / counts.sum()


def grid_indices(recorded, grid_interval: float, r_xy: float, bench: tuple[float, float]) -> np.ndarray:
    """Integer grid indices (n, 3), lexicographic, of the sampling cylinder."""
    if not grid_interval > 0:
        raise ValueError("grid_interval must be positive")
    if not r_xy > 0:
        raise ValueError("r_xy must be positive")
    z_min, z_max = bench
    if not z_min < z_max:
        raise ValueError("bench z_min must be below z_max")
    x, y = float(recorded[0]), float(recorded[1])
    g = float(grid_interval)
    ix = np.arange(math.ceil((x - r_xy) / g), math.floor((x + r_xy) / g) + 1)
    iy = np.arange(math.ceil((y - r_xy) / g), math.floor((y + r_xy) / g) + 1)
    iz = np.arange(math.ceil(z_min / g - _GRID_EPS), math.floor(z_max / g + _GRID_EPS) + 1)
    if ix.size == 0 or iy.size == 0 or iz.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    gx, gy = np.meshgrid(ix, iy, indexing="ij")
    dx = gx * g - x
    dy = gy * g - y
    inside = dx * dx + dy * dy < r_xy * r_xy
    xy = np.column_stack([gx[inside], gy[inside]])
    out = np.empty((xy.shape[0] * iz.size, 3), dtype=np.int64)
    out[:, :2] = np.repeat(xy, iz.size, axis=0)
    out[:, 2] = np.tile(iz, xy.shape[0])
    return out


def sample_dig_locations(recorded, grid_interval: float, r_xy: float, bench: tuple[float, float]) -> list[SampledLocation]:
    """Grid points within XY distance ``r_xy`` of ``recorded`` spanning the bench height.

    Raises
    ------
    NoSampledLocations
        If the cylinder contains no grid point.
    """
    idx = grid_indices(recorded, grid_interval, r_xy, bench)
    if idx.shape[0] == 0:
        raise NoSampledLocations(
            f"no grid point within r_xy={r_xy} of {tuple(recorded)} at interval {grid_interval}"
        )
    pos = idx * float(grid_interval)
    d = np.hypot(pos[:, 0] - recorded[0], pos[:, 1] - recorded[1])
    return [
        SampledLocation(tuple(float(v) for v in p), float(di), tuple(int(v) for v in k))
        for p, di, k in zip(pos, d, idx)
    ]
