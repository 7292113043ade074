"""Propagation of bucket uncertainty to trucks and dump destinations.

A truck (or a dump, pooling all its trucks' buckets) is simulated ``M`` times,
``M`` being the smallest location count among its buckets. Simulation ``j``
puts every bucket at its ``j``-th simulated location (lexicographic order), so
the load is one linear combination of correlated blocks and hence a single
Gaussian. The ``M`` Gaussians are moment-matched with weights ``1/M``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .blocks import BlockModel, CovarianceModel, quadratic_forms
from .bucket import BucketEstimator, LocationSet
from .config import PipelineConfig
from .errors import EstimationError, WindowError
from .gmm import GaussianMixture, GaussianMoment, moment_match
from .records import DigEvent

DumpMode = Literal["correlated", "window"]


@dataclass
class TruckEstimate:
    truck_id: str
    matched: GaussianMoment
    n_buckets: int
    n_simulations: int

    @property
    def std(self) -> float:
        return self.matched.std


@dataclass
class DumpEstimate:
    dump_id: str
    matched: GaussianMoment
    n_trucks: int
    mode: DumpMode
    n_buckets: int = 0
    n_simulations: int = 0
    window_index: int = 0
    window_start: float | None = None

    @property
    def std(self) -> float:
        return self.matched.std


def simulation_weights(location_sets: Sequence[LocationSet], m: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-simulation block weights for a load built from several buckets.

    Returns ``(rows, W)`` where ``W[j]`` holds the weight of each block row in
    simulation ``j``: every bucket contributes its ``j``-th fraction vector
    scaled by ``1/N``, so each row of ``W`` sums to one.
    """
    if not location_sets:
        raise ValueError("need at least one bucket")
    if m is None:
        m = min(len(s) for s in location_sets)
    union = np.unique(np.concatenate([s.rows[:m].ravel() for s in location_sets]))
    w = np.zeros((m, union.size))
    share = 1.0 / len(location_sets)
    sims = np.arange(m)[:, None]
    for s in location_sets:
        idx = np.searchsorted(union, s.rows[:m])
        np.add.at(w, (np.broadcast_to(sims, idx.shape), idx), s.fractions[:m] * share)
    return union, w


def simulate_loads(
    location_sets: Sequence[LocationSet], model: BlockModel, cov: CovarianceModel
) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances of all ``M`` simulated loads."""
    rows, w = simulation_weights(location_sets)
    return w @ model.means[rows], np.maximum(quadratic_forms(model, cov, rows, w), 0.0)


def simulate_truck_value(
    j: int,
    location_sets: Sequence[LocationSet],
    model: BlockModel,
    cov: CovarianceModel,
) -> GaussianMoment:
    """Gaussian of the ``j``-th simulated truck load."""
    m = min(len(s) for s in location_sets)
    if not 0 <= j < m:
        raise IndexError(f"simulation index {j} outside [0, {m})")
    sub = [s.head(m) for s in location_sets]
    rows, w = simulation_weights(sub)
    var = quadratic_forms(model, cov, rows, w[j:j + 1])[0]
    return GaussianMoment(float(w[j] @ model.means[rows]), max(float(var), 0.0))


def _location_sets(estimator: BucketEstimator, digs: Sequence[DigEvent]) -> list[LocationSet]:
    sets = []
    for d in digs:
        try:
            sets.append(estimator.locations(d))
        except EstimationError as exc:
            raise EstimationError(f"bucket {d.dig_event_id}: {exc.reason}") from exc
    return sets


def _pooled_estimate(estimator: BucketEstimator, digs: Sequence[DigEvent]) -> tuple[GaussianMoment, int]:
    if not digs:
        raise EstimationError("no buckets")
    sets = _location_sets(estimator, digs)
    means, variances = simulate_loads(sets, estimator.model, estimator.cov)
    return moment_match(GaussianMixture.equal(means, variances)), means.size


def estimate_truck(
    truck_id: str,
    digs: Sequence[DigEvent],
    model: BlockModel,
    cov: CovarianceModel | None,
    config: PipelineConfig,
    estimator: BucketEstimator | None = None,
) -> TruckEstimate:
    """Matched moments of one truck load from its buckets' dig events."""
    est = estimator or BucketEstimator(model, config, cov)
    try:
        matched, m = _pooled_estimate(est, digs)
    except EstimationError as exc:
        raise EstimationError(exc.reason, truck_id) from exc
    return TruckEstimate(truck_id, matched, len(digs), m)


def estimate_dump_correlated(
    dump_id: str,
    truck_digs: dict[str, Sequence[DigEvent]],
    model: BlockModel,
    cov: CovarianceModel | None,
    config: PipelineConfig,
    estimator: BucketEstimator | None = None,
) -> DumpEstimate:
    """Dump moments pooling every bucket of every truck, with spatial correlation kept."""
    est = estimator or BucketEstimator(model, config, cov)
    digs = [d for t in sorted(truck_digs) for d in truck_digs[t]]
    try:
        matched, m = _pooled_estimate(est, digs)
    except EstimationError as exc:
        raise EstimationError(exc.reason, dump_id) from exc
    return DumpEstimate(dump_id, matched, len(truck_digs), "correlated", len(digs), m)


def estimate_dump_window(
    truck_moments: Sequence[GaussianMoment],
    dump_id: str = "",
    window_index: int = 0,
    window_start: float | None = None,
) -> DumpEstimate:
    """Dump moments from independent trucks arriving within one time window."""
    if not truck_moments:
        raise WindowError("empty dump window", dump_id or None)
    mix = GaussianMixture.equal([t.mean for t in truck_moments], [t.variance for t in truck_moments])
    return DumpEstimate(
        dump_id, moment_match(mix), len(truck_moments), "window",
        window_index=window_index, window_start=window_start,
    )


def window_groups(
    arrivals: dict[str, float], window_seconds: float | None, origin: float | None = None
) -> list[tuple[int, float, list[str]]]:
    """Split trucks into consecutive windows by arrival time.

    Returns ``(window_index, window_start, truck_ids)`` for non-empty windows.
    """
    if not arrivals:
        return []
    t0 = min(arrivals.values()) if origin is None else origin
    if window_seconds is None:
        return [(0, t0, sorted(arrivals))]
    groups: dict[int, list[str]] = {}
    for truck, t in arrivals.items():
        groups.setdefault(int((t - t0) // window_seconds), []).append(truck)
    return [(k, t0 + k * window_seconds, sorted(v)) for k, v in sorted(groups.items())]
