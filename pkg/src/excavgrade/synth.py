"""Synthetic two-region benches and Monte-Carlo oracles for bucket/truck moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockModel, CovarianceModel, covariance_rows
from .bucket import BucketEstimator, LocationSet, component_weights
from .config import PipelineConfig
from .errors import EstimationError, NumericalError
from .records import DigEvent, HaulCycle

ORACLE_PARTITION = 10_000
_EIG_CLAMP = 1e-9


@dataclass(frozen=True)
class ScenarioSpec:
    """Synthetic bench: high-grade region for ``y >= split_y``, low-grade below.

    The bench spans ``x in [0, bench_size[0]]``, ``y`` centred on 0 and
    ``z in [bench_z0, bench_z0 + bench_height]``. Digs sweep rows from south to
    north inside ``dig_margin`` of the bench edge; consecutive buckets fill
    trucks and consecutive trucks share a dump.
    """

    bench_size: tuple[float, float] = (60.0, 60.0)
    bench_height: float = 10.0
    bench_z0: float = 0.0
    block_size: float = 2.0
    bench_id: str = "X10"
    high_mean: float = 62.0
    low_mean: float = 45.0
    high_std: float = 1.0
    low_std: float = 1.5
    split_y: float = 0.0
    transition_band: float = 0.0
    kernel: CovarianceModel = field(default_factory=CovarianceModel)
    dig_margin: float = 14.0
    dig_row_spacing: float = 3.0
    dig_spacing: float = 3.0
    dig_jitter: float = 0.5
    n_digs: int | None = None
    dig_interval_seconds: float = 30.0
    haul_seconds: float = 600.0
    buckets_per_truck: int = 8
    trucks_per_dump: int = 5
    seed: int = 7

    def __post_init__(self) -> None:
        positive = (
            *self.bench_size, self.bench_height, self.block_size, self.dig_row_spacing,
            self.dig_spacing, self.dig_interval_seconds,
        )
        if any(not (math.isfinite(v) and v > 0) for v in positive):
            raise ValueError("scenario dimensions and spacings must be positive")
        if self.buckets_per_truck < 1 or self.trucks_per_dump < 1:
            raise ValueError("buckets_per_truck and trucks_per_dump must be >= 1")
        if self.transition_band < 0 or self.dig_jitter < 0 or self.dig_margin < 0:
            raise ValueError("transition_band, dig_jitter and dig_margin must be >= 0")


def reference_spec(**changes) -> ScenarioSpec:
    """Small two-region bench (4500 blocks) used by the oracle checks."""
    return ScenarioSpec(**changes)


def replay_spec(**changes) -> ScenarioSpec:
    """Bench-scale replay: 50 000 blocks, 3477 digs, 348 trucks, 10 dumps."""
    base = dict(
        bench_size=(200.0, 200.0),
        dig_row_spacing=3.0,
        dig_spacing=172.0 / 59.0,
        n_digs=3477,
        buckets_per_truck=10,
        trucks_per_dump=35,
    )
    base.update(changes)
    return ScenarioSpec(**base)


def grade_at(spec: ScenarioSpec, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prior mean and std at northing ``y``, blended linearly across the band."""
    y = np.asarray(y, dtype=float)
    if spec.transition_band > 0:
        t = np.clip((y - spec.split_y) / spec.transition_band + 0.5, 0.0, 1.0)
    else:
        t = (y >= spec.split_y).astype(float)
    mean = spec.low_mean + t * (spec.high_mean - spec.low_mean)
    std = spec.low_std + t * (spec.high_std - spec.low_std)
    return mean, std


def generate_blocks(spec: ScenarioSpec) -> BlockModel:
    b = spec.block_size
    nx = int(round(spec.bench_size[0] / b))
    ny = int(round(spec.bench_size[1] / b))
    nz = int(round(spec.bench_height / b))
    if min(nx, ny, nz) < 1:
        raise ValueError("bench smaller than one block")
    y0 = -0.5 * ny * b
    cx = (np.arange(nx) + 0.5) * b
    cy = y0 + (np.arange(ny) + 0.5) * b
    cz = spec.bench_z0 + (np.arange(nz) + 0.5) * b
    gx, gy, gz = np.meshgrid(cx, cy, cz, indexing="ij")
    centroids = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    n = centroids.shape[0]
    mean, std = grade_at(spec, centroids[:, 1])
    return BlockModel(
        np.arange(1, n + 1),
        centroids,
        np.full((n, 3), b),
        mean,
        std,
        [spec.bench_id] * n,
    )


def generate_digs(spec: ScenarioSpec) -> list[DigEvent]:
    rng = np.random.default_rng(spec.seed)
    b = spec.block_size
    width = round(spec.bench_size[0] / b) * b
    height = round(spec.bench_size[1] / b) * b
    x_lo, x_hi = spec.dig_margin, width - spec.dig_margin
    y_lo, y_hi = -0.5 * height + spec.dig_margin, 0.5 * height - spec.dig_margin
    if x_hi < x_lo or y_hi < y_lo:
        raise ValueError("dig_margin leaves no room for digging")
    xs = np.arange(x_lo, x_hi + 1e-9, spec.dig_spacing)
    ys = np.arange(y_lo, y_hi + 1e-9, spec.dig_row_spacing)
    path = []
    for k, y in enumerate(ys):
        row = xs if k % 2 == 0 else xs[::-1]
        path.extend((x, y) for x in row)
    if spec.n_digs is not None:
        if spec.n_digs > len(path):
            raise ValueError(f"dig path holds {len(path)} digs, {spec.n_digs} requested")
        path = path[: spec.n_digs]
    pts = np.asarray(path, dtype=float).reshape(-1, 2)
    j = rng.uniform(-spec.dig_jitter, spec.dig_jitter, size=pts.shape)
    pts = np.clip(pts + j, [x_lo, y_lo], [x_hi, y_hi])
    z = rng.uniform(spec.bench_z0 + 1.0, spec.bench_z0 + spec.bench_height - 1.0, size=len(pts))
    # round so that CSV round trips are exact
    pts = np.round(pts, 3)
    z = np.round(z, 3)
    return [
        DigEvent(i + 1, (float(p[0]), float(p[1]), float(zz)), spec.bench_id, float(i * spec.dig_interval_seconds))
        for i, (p, zz) in enumerate(zip(pts, z))
    ]


def generate_cycles(spec: ScenarioSpec, digs: list[DigEvent]) -> list[HaulCycle]:
    n_trucks = math.ceil(len(digs) / spec.buckets_per_truck)
    width_t = max(4, len(str(n_trucks)))
    n_dumps = math.ceil(n_trucks / spec.trucks_per_dump)
    width_d = max(2, len(str(n_dumps)))
    cycles = []
    for t in range(n_trucks):
        members = digs[t * spec.buckets_per_truck:(t + 1) * spec.buckets_per_truck]
        arrival = members[-1].timestamp + spec.haul_seconds
        truck_id = f"T{t + 1:0{width_t}d}"
        dump_id = f"D{t // spec.trucks_per_dump + 1:0{width_d}d}"
        cycles.extend(HaulCycle(d.dig_event_id, truck_id, dump_id, arrival) for d in members)
    return cycles


def generate_scenario(spec: ScenarioSpec) -> tuple[BlockModel, list[DigEvent], list[HaulCycle]]:
    """Block model, dig events and haul cycles for ``spec`` (deterministic in the seed)."""
    digs = generate_digs(spec)
    return generate_blocks(spec), digs, generate_cycles(spec, digs)


@dataclass(frozen=True)
class OracleResult:
    """Empirical moments from Monte-Carlo sampling and their standard errors."""

    mean: float
    std: float
    se_mean: float
    se_std: float
    n_samples: int


def _sqrt_psd(sigma: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(sigma)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -_EIG_CLAMP * scale:
        raise NumericalError(f"covariance not PSD (min eigenvalue {vals.min():.3g})")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _summarise(values: np.ndarray) -> OracleResult:
    n = values.size
    mean = float(values.mean())
    c = values - mean
    m2 = float(np.mean(c * c))
    std = math.sqrt(m2 * n / (n - 1))
    if m2 > 0:
        kurt = float(np.mean(c**4)) / (m2 * m2)
        se_std = std * math.sqrt(max(kurt - 1.0, 0.0) / (4.0 * n))
    else:
        se_std = 0.0
    return OracleResult(mean, std, std / math.sqrt(n), se_std, n)


def _partitions(n_samples: int, seed: int):
    n_parts = math.ceil(n_samples / ORACLE_PARTITION)
    seeds = np.random.SeedSequence(seed).spawn(n_parts)
    for k, ss in enumerate(seeds):
        size = min(ORACLE_PARTITION, n_samples - k * ORACLE_PARTITION)
        yield k * ORACLE_PARTITION, size, np.random.default_rng(ss)


def _check_n(n_samples: int) -> None:
    if n_samples < 10_000:
        raise ValueError("oracle needs n_samples >= 10^4")


def mc_oracle_bucket(
    dig: DigEvent,
    model: BlockModel,
    cov: CovarianceModel | None,
    config: PipelineConfig,
    n_samples: int = 100_000,
    seed: int = 0,
    estimator: BucketEstimator | None = None,
) -> OracleResult:
    """Sample (location, joint block grades) pairs and report the bucket grade's moments.

    Each sample picks a simulated location with the mixture weights, draws the
    intersecting blocks' grades jointly from N(mu, Sigma) and mixes them by
    volume fraction.
    """
    _check_n(n_samples)
    est = estimator or BucketEstimator(model, config, cov)
    cov = est.cov
    locs = est.locations(dig)
    weights = component_weights(locs.distances, config.weight_mode, config.grid_interval)
    roots: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    values = np.empty(n_samples)
    for start, size, rng in _partitions(n_samples, seed):
        pick = rng.choice(len(locs), size=size, p=weights)
        out = values[start:start + size]
        for j in np.unique(pick):
            if j not in roots:
                live = locs.fractions[j] > 0
                rows = locs.rows[j][live]
                sigma = covariance_rows(model, cov, rows)
                roots[j] = (model.means[rows], _sqrt_psd(sigma), locs.fractions[j][live])
            mu, root, v = roots[j]
            where = np.flatnonzero(pick == j)
            z = rng.standard_normal((where.size, mu.size))
            grades = mu + z @ root.T
            out[where] = grades @ v
    return _summarise(values)


def _truck_location_sets(est: BucketEstimator, digs: list[DigEvent]) -> list[LocationSet]:
    sets = []
    for d in digs:
        try:
            sets.append(est.locations(d))
        except EstimationError as exc:
            raise EstimationError(exc.reason, d.dig_event_id) from exc
    return sets


def mc_oracle_truck(
    digs: list[DigEvent],
    model: BlockModel,
    cov: CovarianceModel | None,
    config: PipelineConfig,
    n_samples: int = 100_000,
    seed: int = 0,
    estimator: BucketEstimator | None = None,
) -> OracleResult:
    """Monte-Carlo truck grade: one shared joint block draw per sample across all buckets.

    Sample ``k`` picks a simulation index ``j`` uniformly below the smallest
    bucket location count, places every bucket at its ``j``-th location and
    averages the bucket contents under a single grade realisation.
    """
    _check_n(n_samples)
    if not digs:
        raise ValueError("truck needs at least one bucket")
    est = estimator or BucketEstimator(model, config, cov)
    cov = est.cov
    sets = _truck_location_sets(est, digs)
    m = min(len(s) for s in sets)
    share = 1.0 / len(sets)
    cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    values = np.empty(n_samples)
    for start, size, rng in _partitions(n_samples, seed):
        pick = rng.integers(0, m, size=size)
        out = values[start:start + size]
        for j in np.unique(pick):
            if j not in cache:
                parts = []
                for s in sets:
                    live = s.fractions[j] > 0
                    parts.append((s.rows[j][live], s.fractions[j][live] * share))
                union = np.unique(np.concatenate([r for r, _ in parts]))
                weights = np.zeros(union.size)
                for r, f in parts:
                    weights[np.searchsorted(union, r)] += f
                sigma = covariance_rows(model, cov, union)
                cache[j] = (model.means[union], _sqrt_psd(sigma), weights)
            mu, root, w = cache[j]
            where = np.flatnonzero(pick == j)
            z = rng.standard_normal((where.size, mu.size))
            out[where] = (mu + z @ root.T) @ w
    return _summarise(values)
