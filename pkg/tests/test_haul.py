import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from excavgrade.blocks import CovarianceModel
from excavgrade.bucket import BucketEstimator, LocationSet, estimate_at_location
from excavgrade.config import PipelineConfig
from excavgrade.errors import EstimationError, WindowError
from excavgrade.geometry import SampledLocation
from excavgrade.gmm import GaussianMoment
from excavgrade.haul import (
    estimate_dump_correlated,
    estimate_dump_window,
    estimate_truck,
    simulate_loads,
    simulate_truck_value,
    simulation_weights,
    window_groups,
)
from excavgrade.records import DigEvent

from conftest import FULL_CORR, box_model, uniform_bench, var_close


def hand_set(rows, fractions):
    """LocationSet with one location per entry of ``rows``."""
    width = max(len(r) for r in rows)
    rp = np.array([list(r) + [r[0]] * (width - len(r)) for r in rows])
    fp = np.array([list(f) + [0.0] * (width - len(f)) for f in fractions])
    n = len(rows)
    return LocationSet(np.zeros((n, 3), int), np.zeros((n, 3)), np.zeros(n), rp, fp, n, 0)


def test_fig4_layout_against_dense_oracle():
    # four correlated blocks in a 2x2 layout, three buckets straddling them
    m = box_model([[0, 0, 0], [2, 0, 0], [0, 2, 0], [2, 2, 0]], (2, 2, 2), [50.0, 55.0, 60.0, 62.0], [1.0, 1.5, 2.0, 0.5])
    cov = CovarianceModel(length_scales=(3.0, 4.0, 5.0), noise=0.1, jitter=0.0)
    sets = [
        hand_set([[0, 1], [0]], [[0.7, 0.3], [1.0]]),
        hand_set([[1, 3], [2, 3]], [[0.5, 0.5], [0.2, 0.8]]),
        hand_set([[0, 1, 2, 3], [3]], [[0.1, 0.2, 0.3, 0.4], [1.0]]),
    ]
    sigma = np.empty((4, 4))
    d = m.centroids[:, None, :] - m.centroids[None, :, :]
    ls = np.array([3.0, 4.0, 5.0])
    for i in range(4):
        for j in range(4):
            sigma[i, j] = m.stds[i] * m.stds[j] * np.exp(-0.5 * np.sum((d[i, j] / ls) ** 2))
    sigma += 0.1 * np.eye(4)
    for j in range(2):
        w = np.zeros(4)
        for s in sets:
            live = s.fractions[j] > 0
            np.add.at(w, s.rows[j][live], s.fractions[j][live] / 3)
        g = simulate_truck_value(j, sets, m, cov)
        assert g.mean == pytest.approx(w @ m.means, abs=1e-12)
        assert var_close(g.variance, w @ sigma @ w)


def test_simulation_index_bounds():
    m = box_model([[0, 0, 0]], (2, 2, 2), 50, 1)
    sets = [hand_set([[0], [0], [0]], [[1.0]] * 3), hand_set([[0]], [[1.0]])]
    with pytest.raises(IndexError):
        simulate_truck_value(1, sets, m, CovarianceModel())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_simulation_weights_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    sets = []
    for _ in range(rng.integers(1, 6)):
        n = int(rng.integers(1, 8))
        rows = [list(rng.choice(30, size=int(rng.integers(1, 6)), replace=False)) for _ in range(n)]
        sets.append(hand_set(rows, [list(rng.dirichlet(np.ones(len(r)))) for r in rows]))
    union, w = simulation_weights(sets)
    assert w.shape == (min(len(s) for s in sets), union.size)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_single_bucket_truck_equals_bucket(reference):
    model, digs, _ = reference
    cfg = PipelineConfig()
    est = BucketEstimator(model, cfg)
    for d in digs[:5]:
        b = est.estimate(d)
        t = estimate_truck("T", [d], model, None, cfg, est)
        assert t.matched.mean == pytest.approx(b.matched.mean, abs=1e-9)
        assert var_close(t.matched.variance, b.matched.variance)
        assert (t.n_buckets, t.n_simulations) == (1, b.n_components)


def test_single_bucket_simulation_equals_location(reference):
    model, digs, _ = reference
    est = BucketEstimator(model, PipelineConfig())
    dig = digs[3]
    locs = est.locations(dig)
    allowed = model.radius_neighbors(dig.position, est.config.r_xy_neighbor, "X10")
    for j in (0, len(locs) // 2, len(locs) - 1):
        g = simulate_truck_value(j, [locs], model, est.cov)
        at = SampledLocation(tuple(locs.positions[j]), 0.0)
        ref, _, _ = estimate_at_location(at, est.bucket, model, est.cov, "X10", candidate_ids=allowed)
        assert g.mean == pytest.approx(ref.mean, abs=1e-9)
        assert var_close(g.variance, ref.variance)


def test_two_buckets_in_one_block():
    m = box_model([[0, 0, 5]], (200, 200, 10), 60.0, 2.0)
    cfg = PipelineConfig()
    cov = CovarianceModel(noise=0.0, jitter=0.0)
    digs = [DigEvent(1, (1.0, 2.0, 5.0), "B1"), DigEvent(2, (-3.0, 4.0, 5.0), "B1")]
    t = estimate_truck("T1", digs, m, cov, cfg)
    assert t.matched.mean == 60.0
    assert var_close(t.matched.variance, 4.0)


def test_homogeneous_truck_returns_prior():
    m = uniform_bench(mean=55.0, std=1.3)
    digs = [DigEvent(i, (14.0 + 3 * i, 20.0 - i, 5.0), "B1") for i in range(4)]
    t = estimate_truck("T1", digs, m, FULL_CORR, PipelineConfig())
    assert t.matched.mean == pytest.approx(55.0, abs=1e-9)
    assert var_close(t.matched.variance, 1.69)


def test_truck_uses_min_location_count(reference):
    model, digs, _ = reference
    cfg = PipelineConfig()
    est = BucketEstimator(model, cfg)
    counts = [len(est.locations(d)) for d in digs[:8]]
    t = estimate_truck("T", digs[:8], model, None, cfg, est)
    assert t.n_simulations == min(counts)
    means, variances = simulate_loads([est.locations(d) for d in digs[:8]], model, est.cov)
    assert means.size == min(counts)


def test_truck_error_carries_truck_id():
    m = uniform_bench()
    with pytest.raises(EstimationError) as exc:
        estimate_truck("T9", [DigEvent(1, None, "B1")], m, None, PipelineConfig())
    assert exc.value.entity_id == "T9"


def test_correlated_dump_pools_buckets(reference):
    model, digs, _ = reference
    cfg = PipelineConfig()
    est = BucketEstimator(model, cfg)
    trucks = {"T1": digs[:8], "T2": digs[8:16]}
    d = estimate_dump_correlated("D1", trucks, model, None, cfg, est)
    pooled = estimate_truck("X", digs[:16], model, None, cfg, est)
    assert (d.matched.mean, d.matched.variance) == (pooled.matched.mean, pooled.matched.variance)
    t_means = [estimate_truck(k, v, model, None, cfg, est).matched.mean for k, v in trucks.items()]
    assert min(t_means) - 0.5 <= d.matched.mean <= max(t_means) + 0.5
    assert (d.n_trucks, d.n_buckets, d.mode) == (2, 16, "correlated")


def test_window_two_trucks():
    d = estimate_dump_window([GaussianMoment(55, 1), GaussianMoment(65, 1)])
    assert d.matched.mean == pytest.approx(60.0)
    assert d.matched.variance == pytest.approx(26.0)


@pytest.mark.parametrize("n", [1, 2, 7])
def test_window_identical_trucks(n):
    g = GaussianMoment(57.25, 0.81)
    d = estimate_dump_window([g] * n)
    assert d.matched.mean == 57.25
    assert var_close(d.matched.variance, 0.81)
    assert d.n_trucks == n


def test_window_empty():
    with pytest.raises(WindowError):
        estimate_dump_window([], "D1")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(30, 70), st.floats(0, 9)), min_size=1, max_size=30))
def test_window_mean_within_truck_range(trucks):
    d = estimate_dump_window([GaussianMoment(m, v) for m, v in trucks])
    lo, hi = min(m for m, _ in trucks), max(m for m, _ in trucks)
    assert lo <= d.matched.mean <= hi


def test_window_groups():
    arrivals = {"A": 100.0, "B": 150.0, "C": 405.0, "D": 99.0}
    assert window_groups(arrivals, None) == [(0, 99.0, ["A", "B", "C", "D"])]
    assert window_groups(arrivals, 100.0) == [(0, 99.0, ["A", "B", "D"]), (3, 399.0, ["C"])]
    assert window_groups({}, 10.0) == []
