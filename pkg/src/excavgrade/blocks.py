"""Prior sub-block model, block covariance and cylindrical neighbour search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError

# fixed sim-batch size for quadratic forms; keeps BLAS shapes independent of
# how work is partitioned across workers
QUAD_BATCH = 32
_KRON_MAX_CELLS = 400_000


@dataclass(frozen=True)
class Block:
    """One axis-aligned sub-block with prior Fe wt% moments."""

    id: int
    centroid: tuple[float, float, float]
    dims: tuple[float, float, float]
    mean_grade: float
    std_grade: float
    bench_id: str

    def __post_init__(self) -> None:
        if len(self.centroid) != 3 or len(self.dims) != 3:
            raise DataError(f"block {self.id}: centroid and dims need 3 components")
        if not all(math.isfinite(c) for c in self.centroid):
            raise DataError(f"block {self.id}: non-finite centroid")
        if not all(math.isfinite(d) and d > 0 for d in self.dims):
            raise DataError(f"block {self.id}: dims must be strictly positive")
        if not (math.isfinite(self.mean_grade) and 0.0 <= self.mean_grade <= 100.0):
            raise DataError(f"block {self.id}: mean grade {self.mean_grade} outside [0, 100]")
        if not (math.isfinite(self.std_grade) and self.std_grade >= 0.0):
            raise DataError(f"block {self.id}: std grade must be finite and >= 0")


@dataclass(frozen=True)
class CovarianceModel:
    """Anisotropic squared-exponential covariance between blocks.

    ``cov_ij = amplitude * std_i * std_j * exp(-0.5 * sum_a (d_a / l_a)^2)``
    plus ``noise + jitter`` on the diagonal.
    """

    length_scales: tuple[float, float, float] = (25.0, 25.0, 8.0)
    amplitude: float = 1.0
    noise: float = 0.0
    jitter: float = 1e-8

    def __post_init__(self) -> None:
        ls = tuple(float(v) for v in self.length_scales)
        object.__setattr__(self, "length_scales", ls)
        if len(ls) != 3 or not all(math.isfinite(v) and v > 0 for v in ls):
            raise ValueError(f"length_scales must be 3 positive values, got {ls}")
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError("amplitude must be positive")
        if not (self.noise >= 0 and self.jitter >= 0):
            raise ValueError("noise and jitter must be non-negative")

    @property
    def nugget(self) -> float:
        return self.noise + self.jitter

    def correlation(self, delta: np.ndarray) -> np.ndarray:
        """Kernel correlation for separations ``delta`` of shape (..., 3)."""
        scaled = np.asarray(delta, dtype=float) / np.asarray(self.length_scales)
        return np.exp(-0.5 * np.sum(scaled * scaled, axis=-1))

    def axis_correlation(self, coords: np.ndarray, axis: int) -> np.ndarray:
        d = (coords[:, None] - coords[None, :]) / self.length_scales[axis]
        return np.exp(-0.5 * d * d)


@dataclass
class _Bench:
    z_min: float
    z_max: float
    rows: np.ndarray
    tree: cKDTree
    max_half_diag_xy: float


class BlockModel:
    """Immutable collection of blocks with one XY KD-tree per bench.

    Parameters
    ----------
    ids, centroids, dims, means, stds, benches
        Column arrays, one row per block. ``centroids`` and ``dims`` are (n, 3).

    Notes
    -----
    Neighbour queries are cylinders: an XY radius around the query and the
    full height of the query's bench.
    """

    def __init__(
        self,
        ids: Sequence[int],
        centroids,
        dims,
        means,
        stds,
        benches: Sequence[str],
    ) -> None:
        self.ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        n = self.ids.size
        self.centroids = np.asarray(centroids, dtype=float).reshape(n, 3)
        self.dims = np.asarray(dims, dtype=float).reshape(n, 3)
        self.means = np.asarray(means, dtype=float).reshape(n)
        self.stds = np.asarray(stds, dtype=float).reshape(n)
        self.bench_ids = np.asarray([str(b) for b in benches], dtype=object).reshape(n)
        self._validate()

        for arr in (self.ids, self.centroids, self.dims, self.means, self.stds):
            arr.flags.writeable = False
        self.lo = self.centroids - 0.5 * self.dims
        self.hi = self.centroids + 0.5 * self.dims
        self._row_of = {int(i): r for r, i in enumerate(self.ids)}

        self._benches: dict[str, _Bench] = {}
        for name in sorted(set(self.bench_ids)):
            rows = np.flatnonzero(self.bench_ids == name)
            # stable id order inside the bench
            rows = rows[np.argsort(self.ids[rows], kind="stable")]
            half_diag = 0.5 * np.hypot(self.dims[rows, 0], self.dims[rows, 1])
            self._benches[name] = _Bench(
                z_min=float(self.lo[rows, 2].min()),
                z_max=float(self.hi[rows, 2].max()),
                rows=rows,
                tree=cKDTree(self.centroids[rows, :2]),
                max_half_diag_xy=float(half_diag.max()),
            )

    def _validate(self) -> None:
        n = self.ids.size
        if len(np.unique(self.ids)) != n:
            raise DataError("block ids must be unique")
        if not np.all(np.isfinite(self.centroids)):
            raise DataError("non-finite block centroid")
        if not np.all(np.isfinite(self.dims)) or np.any(self.dims <= 0):
            raise DataError("block dims must be strictly positive")
        if not np.all(np.isfinite(self.means)) or np.any((self.means < 0) | (self.means > 100)):
            raise DataError("block mean grades must lie in [0, 100]")
        if not np.all(np.isfinite(self.stds)) or np.any(self.stds < 0):
            raise DataError("block std grades must be finite and >= 0")

    @classmethod
    def from_blocks(cls, blocks: Iterable[Block]) -> BlockModel:
        blocks = list(blocks)
        return cls(
            [b.id for b in blocks],
            np.array([b.centroid for b in blocks], dtype=float).reshape(-1, 3),
            np.array([b.dims for b in blocks], dtype=float).reshape(-1, 3),
            [b.mean_grade for b in blocks],
            [b.std_grade for b in blocks],
            [b.bench_id for b in blocks],
        )

    def __len__(self) -> int:
        return self.ids.size

    def block(self, block_id: int) -> Block:
        r = self.row(block_id)
        return Block(
            int(self.ids[r]),
            tuple(float(v) for v in self.centroids[r]),
            tuple(float(v) for v in self.dims[r]),
            float(self.means[r]),
            float(self.stds[r]),
            str(self.bench_ids[r]),
        )

    @property
    def blocks(self) -> list[Block]:
        return [self.block(int(i)) for i in self.ids]

    @property
    def benches(self) -> list[str]:
        return list(self._benches)

    def bench_extent(self, bench_id: str) -> tuple[float, float]:
        b = self._bench(bench_id)
        return b.z_min, b.z_max

    @property
    def bench_extent_z(self) -> dict[str, tuple[float, float]]:
        return {name: (b.z_min, b.z_max) for name, b in self._benches.items()}

    def max_half_diag_xy(self, bench_id: str) -> float:
        return self._bench(bench_id).max_half_diag_xy

    def _bench(self, bench_id: str) -> _Bench:
        try:
            return self._benches[str(bench_id)]
        except KeyError:
            raise DataError(f"unknown bench {bench_id!r}") from None

    def bench_of(self, z: float) -> str:
        """Bench whose vertical extent contains ``z`` (lowest bench wins ties)."""
        hits = [n for n, b in self._benches.items() if b.z_min <= z <= b.z_max]
        if not hits:
            raise DataError(f"z={z} lies outside every bench")
        return min(hits, key=lambda n: self._benches[n].z_min)

    def row(self, block_id: int) -> int:
        try:
            return self._row_of[int(block_id)]
        except KeyError:
            raise DataError(f"unknown block id {block_id}") from None

    def rows(self, ids) -> np.ndarray:
        return np.fromiter((self.row(i) for i in ids), dtype=np.int64)

    def radius_neighbor_rows(self, query, r_xy: float, bench: str | None = None) -> np.ndarray:
        """Rows of blocks within XY distance ``< r_xy`` of ``query``, whole bench in z.

        Rows come back ordered by block id.
        """
        if not r_xy > 0:
            raise ValueError(f"r_xy must be positive, got {r_xy}")
        q = np.asarray(query, dtype=float)
        if bench is None:
            bench = self.bench_of(float(q[2]))
        b = self._bench(bench)
        local = b.tree.query_ball_point(q[:2], r_xy)
        if not local:
            return np.empty(0, dtype=np.int64)
        rows = b.rows[np.sort(np.asarray(local, dtype=np.int64))]
        d = self.centroids[rows, :2] - q[:2]
        # query_ball_point is inclusive at r_xy; the contract is strict
        return rows[np.einsum("ij,ij->i", d, d) < r_xy * r_xy]

    def radius_neighbors(self, query, r_xy: float, bench: str | None = None) -> list[int]:
        return [int(i) for i in self.ids[self.radius_neighbor_rows(query, r_xy, bench)]]


def radius_neighbors(model: BlockModel, query, r_xy: float, bench: str | None = None) -> list[int]:
    """Ids of every block in the query's bench within XY distance ``r_xy``."""
    return model.radius_neighbors(query, r_xy, bench)


def covariance_rows(model: BlockModel, cov: CovarianceModel, rows: np.ndarray, nugget: bool = True):
    rows = np.asarray(rows, dtype=np.int64)
    c = model.centroids[rows]
    s = model.stds[rows]
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))):
        raise DataError("non-finite centroid or std in covariance request")
    rho = cov.correlation(c[:, None, :] - c[None, :, :])
    sigma = cov.amplitude * (s[:, None] * s[None, :]) * rho
    if nugget:
        sigma[np.diag_indices_from(sigma)] += cov.nugget
    return sigma


def block_covariance(model: BlockModel, cov: CovarianceModel, ids) -> np.ndarray:
    """Covariance matrix (n x n, (Fe wt%)^2) between the given blocks."""
    ids = list(ids)
    if not ids:
        raise ValueError("block_covariance needs at least one id")
    return covariance_rows(model, cov, model.rows(ids))


def quadratic_forms(model: BlockModel, cov: CovarianceModel, rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``w_s^T Sigma w_s`` for every row ``w_s`` of ``weights`` over block ``rows``.

    Uses the separability of the kernel when the blocks sit on few distinct
    coordinates (regular or sub-blocked grids); otherwise a dense matrix.
    Both routes are exact up to rounding.
    """
    rows = np.asarray(rows, dtype=np.int64)
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    if weights.shape[1] != rows.size:
        raise ValueError("weights must have one column per block row")
    c = model.centroids[rows]
    ux, ix = np.unique(c[:, 0], return_inverse=True)
    uy, iy = np.unique(c[:, 1], return_inverse=True)
    uz, iz = np.unique(c[:, 2], return_inverse=True)
    ncell = ux.size * uy.size * uz.size
    kron_cost = ncell * (ux.size + uy.size + uz.size)
    if ncell <= _KRON_MAX_CELLS and kron_cost <= rows.size * rows.size:
        flat = (ix * uy.size + iy) * uz.size + iz
        return _quad_kron(model, cov, rows, weights, flat, (ux, uy, uz))
    return _quad_dense(model, cov, rows, weights)


def _quad_dense(model, cov, rows, weights):
    sigma = covariance_rows(model, cov, rows)
    out = np.empty(weights.shape[0])
    for start in range(0, weights.shape[0], QUAD_BATCH):
        w = weights[start:start + QUAD_BATCH]
        out[start:start + QUAD_BATCH] = np.einsum("si,si->s", w @ sigma, w)
    return out


def _quad_kron(model, cov, rows, weights, flat, axes):
    ux, uy, uz = axes
    nx, ny, nz = ux.size, uy.size, uz.size
    kx = cov.axis_correlation(ux, 0)
    ky = cov.axis_correlation(uy, 1)
    kz = cov.axis_correlation(uz, 2)
    std = model.stds[rows]
    unique_cells = np.unique(flat).size == flat.size
    out = np.empty(weights.shape[0])
    for start in range(0, weights.shape[0], QUAD_BATCH):
        w = weights[start:start + QUAD_BATCH]
        s = w.shape[0]
        a = w * std
        t = np.zeros((s, nx * ny * nz))
        if unique_cells:
            t[:, flat] = a
        else:
            for k in range(s):
                np.add.at(t[k], flat, a[k])
        y = kx @ t.reshape(s, nx, ny * nz)
        y = ky @ y.reshape(s * nx, ny, nz)
        y = y @ kz
        quad = np.einsum("si,si->s", t, y.reshape(s, -1))
        out[start:start + s] = cov.amplitude * quad + cov.nugget * np.einsum("si,si->s", w, w)
    return out
