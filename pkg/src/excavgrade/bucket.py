"""Bucket grade estimation over simulated dig locations.

Every grid point around the recorded dig position is treated as a possible
true dig location. At each one the bucket sphere mixes the intersecting
blocks linearly, giving a Gaussian with mean ``v . mu`` and variance
``v^T Sigma v``. The per-location Gaussians form a mixture which is collapsed
by moment matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockModel, CovarianceModel
from .config import PipelineConfig
from .errors import BucketOutsideModel, EstimationError, NoSampledLocations
from .geometry import N_BALL_POINTS, BucketShape, SampledLocation, grid_indices, intersect_rows
from .gmm import GaussianMixture, GaussianMoment, moment_match
from .records import DigEvent


@dataclass
class LocationSet:
    """Valid simulated locations of one bucket, in lexicographic grid order.

    ``rows``/``fractions`` are padded to a common width; padding has zero
    fraction and repeats a valid row.
    """

    keys: np.ndarray
    positions: np.ndarray
    distances: np.ndarray
    rows: np.ndarray
    fractions: np.ndarray
    n_sampled: int
    n_renormalized: int

    def __len__(self) -> int:
        return self.keys.shape[0]

    @property
    def n_invalid(self) -> int:
        return self.n_sampled - len(self)

    def head(self, m: int) -> LocationSet:
        return LocationSet(
            self.keys[:m], self.positions[:m], self.distances[:m],
            self.rows[:m], self.fractions[:m], self.n_sampled, self.n_renormalized,
        )


@dataclass
class BucketEstimate:
    dig_event_id: int
    matched: GaussianMoment
    n_components: int
    components: GaussianMixture | None = None
    locations: LocationSet | None = None
    n_renormalized: int = 0

    @property
    def std(self) -> float:
        return self.matched.std


def location_moments(model: BlockModel, cov: CovarianceModel, rows: np.ndarray, fractions: np.ndarray):
    """Means ``v . mu`` and variances ``v^T Sigma v`` for a padded batch of locations."""
    rows = np.atleast_2d(rows)
    v = np.atleast_2d(fractions)
    means = np.einsum("lk,lk->l", v, model.means[rows])
    c = model.centroids[rows]
    a = v * model.stds[rows]
    rho = cov.correlation(c[:, :, None, :] - c[:, None, :, :])
    quad = np.einsum("li,lij,lj->l", a, rho, a)
    variances = cov.amplitude * quad + cov.nugget * np.einsum("lk,lk->l", v, v)
    return means, np.maximum(variances, 0.0)


def component_weights(distances: np.ndarray, mode: str, grid_interval: float) -> np.ndarray:
    """Mixture weights: uniform, or inverse squared XY distance.

    Distances below one grid interval are floored to it, so a sampled point
    sitting on the recorded position gets the weight of its grid neighbours.
    """
    n = distances.size
    if mode == "equal":
        return np.full(n, 1.0 / n)
    if mode == "idw2":
        d = np.maximum(distances, grid_interval)
        w = 1.0 / (d * d)
        return w / w.sum()
    raise ValueError(f"unknown weight mode {mode!r}")


def estimate_at_location(
    x_j: SampledLocation,
    bucket: BucketShape,
    model: BlockModel,
    cov: CovarianceModel,
    bench: str | None = None,
    candidate_ids=None,
) -> tuple[GaussianMoment, list[int], np.ndarray]:
    """Gaussian of the bucket content if the bucket was dug at ``x_j``.

    Without ``candidate_ids`` every block of the bench that the sphere can
    reach is considered.
    """
    pos = np.asarray(x_j.position, dtype=float)
    if bench is None:
        bench = model.bench_of(float(pos[2]))
    if candidate_ids is None:
        reach = bucket.radius + model.max_half_diag_xy(bench) + 1e-9
        rows = model.radius_neighbor_rows(pos, reach, bench)
    else:
        rows = model.rows(candidate_ids)
    rows, counts = intersect_rows(pos, bucket.radius, model, rows)
    if rows.size == 0:
        raise BucketOutsideModel(f"bucket at {tuple(pos)} intersects no block")
    order = np.argsort(model.ids[rows], kind="stable")
    rows, counts = rows[order], counts[order]
    v = counts / counts.sum()
    mean, var = location_moments(model, cov, rows[None, :], v[None, :])
    return GaussianMoment(float(mean[0]), float(var[0])), [int(i) for i in model.ids[rows]], v


@dataclass(frozen=True)
class _Cell:
    rows: np.ndarray
    counts: np.ndarray
    mean: float
    variance: float


class BucketEstimator:
    """Bucket estimates for one block model and configuration.

    Sphere/block intersections and the unclipped location moments are cached
    per grid point, so neighbouring buckets sharing simulated locations pay
    for them once. Every cached value is a pure function of its grid point.
    """

    def __init__(self, model: BlockModel, config: PipelineConfig, cov: CovarianceModel | None = None) -> None:
        self.model = model
        self.config = config
        self.cov = cov if cov is not None else config.kernel
        self.bucket = BucketShape(config.bucket_volume)
        self._cells: dict[tuple, _Cell | None] = {}

    def _cell(self, bench: str, key: tuple[int, int, int]) -> _Cell | None:
        ck = (bench, key)
        try:
            return self._cells[ck]
        except KeyError:
            pass
        pos = np.array(key, dtype=float) * self.config.grid_interval
        reach = self.bucket.radius + self.model.max_half_diag_xy(bench) + 1e-9
        rows = self.model.radius_neighbor_rows(pos, reach, bench)
        rows, counts = intersect_rows(pos, self.bucket.radius, self.model, rows)
        cell = None
        if rows.size:
            v = counts / counts.sum()
            m, var = location_moments(self.model, self.cov, rows[None, :], v[None, :])
            cell = _Cell(rows, counts, float(m[0]), float(var[0]))
        self._cells[ck] = cell
        return cell

    def cell_keys(self, dig: DigEvent) -> list[tuple]:
        """Cache keys of every grid point sampled around ``dig``."""
        if dig.position is None:
            return []
        keys = grid_indices(
            dig.position, self.config.grid_interval, self.config.r_xy_sampling,
            self.model.bench_extent(dig.bench_id),
        )
        return [(dig.bench_id, k) for k in map(tuple, keys.tolist())]

    def compute_cells(self, keys) -> dict:
        return {k: self._cell(*k) for k in keys}

    def preload(self, cells: dict) -> None:
        self._cells.update(cells)

    def locations(self, dig: DigEvent) -> LocationSet:
        """Simulated locations with at least one reachable block, and their fractions."""
        return self._locations(dig)[0]

    def _locations(self, dig: DigEvent) -> tuple[LocationSet, np.ndarray, np.ndarray]:
        if dig.position is None:
            raise EstimationError("missing dig position", dig.dig_event_id)
        cfg = self.config
        model = self.model
        bench = dig.bench_id
        keys = grid_indices(dig.position, cfg.grid_interval, cfg.r_xy_sampling, model.bench_extent(bench))
        if keys.shape[0] == 0:
            raise NoSampledLocations("no sampled locations", dig.dig_event_id)
        cells = [self._cell(bench, k) for k in map(tuple, keys.tolist())]
        present = np.array([c is not None for c in cells], dtype=bool)
        if not present.any():
            raise BucketOutsideModel("no sampled location intersects a block", dig.dig_event_id)
        keys = keys[present]
        cells = [c for c in cells if c is not None]

        lengths = np.array([c.rows.size for c in cells])
        flat_rows = np.concatenate([c.rows for c in cells])
        flat_counts = np.concatenate([c.counts for c in cells])
        owner = np.repeat(np.arange(len(cells)), lengths)
        allowed = np.zeros(len(model), dtype=bool)
        allowed[model.radius_neighbor_rows(dig.position, cfg.r_xy_neighbor, bench)] = True
        ok = allowed[flat_rows]
        kept = np.bincount(owner, weights=flat_counts * ok, minlength=len(cells))
        clipped = np.bincount(owner, weights=~ok, minlength=len(cells)) > 0
        valid = kept > 0
        if not valid.any():
            raise BucketOutsideModel("no sampled location intersects a block", dig.dig_event_id)

        sel = ok & valid[owner]
        new_index = np.cumsum(valid) - 1
        loc = new_index[owner[sel]]
        n = int(valid.sum())
        per_loc = np.bincount(loc, minlength=n)
        starts = np.cumsum(per_loc) - per_loc
        slot = np.arange(loc.size) - np.repeat(starts, per_loc)
        kept_rows = flat_rows[sel]
        rows_pad = np.repeat(kept_rows[starts][:, None], int(per_loc.max()), axis=1)
        frac_pad = np.zeros(rows_pad.shape)
        rows_pad[loc, slot] = kept_rows
        frac_pad[loc, slot] = flat_counts[sel] / kept[valid][loc]
        n_renorm = int(np.count_nonzero(kept[valid] < N_BALL_POINTS))

        key_arr = keys[valid]
        pos = key_arr * float(cfg.grid_interval)
        dist = np.hypot(pos[:, 0] - dig.position[0], pos[:, 1] - dig.position[1])
        locs = LocationSet(key_arr, pos, dist, rows_pad, frac_pad, int(present.size), n_renorm)
        valid_cells = [c for c, v in zip(cells, valid) if v]
        return locs, clipped[valid], np.array([[c.mean, c.variance] for c in valid_cells])

    def estimate(self, dig: DigEvent, retain_components: bool = False, retain_locations: bool = False) -> BucketEstimate:
        locs, clipped, cached = self._locations(dig)
        means = cached[:, 0].copy()
        variances = cached[:, 1].copy()
        if clipped.any():
            # locations whose sphere reaches past the neighbour radius lose blocks
            m, v = location_moments(self.model, self.cov, locs.rows[clipped], locs.fractions[clipped])
            means[clipped] = m
            variances[clipped] = v
        weights = component_weights(locs.distances, self.config.weight_mode, self.config.grid_interval)
        mix = GaussianMixture(weights, means, variances)
        return BucketEstimate(
            dig_event_id=dig.dig_event_id,
            matched=moment_match(mix),
            n_components=len(mix),
            components=mix if retain_components else None,
            locations=locs if retain_locations else None,
            n_renormalized=locs.n_renormalized,
        )


def estimate_bucket(
    dig: DigEvent,
    model: BlockModel,
    cov: CovarianceModel | None,
    config: PipelineConfig,
    retain_components: bool = False,
) -> BucketEstimate:
    """Matched Gaussian of one bucket's Fe wt%."""
    return BucketEstimator(model, config, cov).estimate(dig, retain_components=retain_components)
