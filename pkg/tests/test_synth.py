import numpy as np
import pytest

from excavgrade.blocks import CovarianceModel
from excavgrade.config import PipelineConfig
from excavgrade.errors import NumericalError
from excavgrade.io import write_blocks, write_cycles, write_digs
from excavgrade.records import DigEvent
from excavgrade.synth import (
    ScenarioSpec,
    _sqrt_psd,
    generate_blocks,
    generate_scenario,
    mc_oracle_bucket,
    mc_oracle_truck,
    reference_spec,
    replay_spec,
)

from conftest import FULL_CORR, box_model, uniform_bench


def test_small_bench_block_count():
    assert len(generate_blocks(ScenarioSpec(bench_size=(10, 10), bench_height=10, block_size=2))) == 125


def test_region_means():
    spec = reference_spec()
    m = generate_blocks(spec)
    high = m.centroids[:, 1] >= 0
    assert np.all(m.means[high] == 62.0) and np.all(m.means[~high] == 45.0)
    assert np.all(m.stds[high] == 1.0) and np.all(m.stds[~high] == 1.5)


def test_transition_band_is_monotone():
    m = generate_blocks(reference_spec(transition_band=10.0))
    order = np.argsort(m.centroids[:, 1])
    assert np.all(np.diff(m.means[order]) >= 0)
    assert 45.0 < m.means[order][len(order) // 2] < 62.0


def test_reference_shape():
    model, digs, cycles = generate_scenario(reference_spec())
    assert len(model) == 4500
    assert len(cycles) == len(digs)
    trucks = {c.truck_id for c in cycles}
    assert all(sum(c.truck_id == t for c in cycles) <= 8 for t in trucks)


def test_replay_preset_sizes():
    spec = replay_spec()
    digs = generate_scenario(spec)[1]
    assert len(digs) == 3477
    assert len(generate_blocks(spec)) == 50_000


def test_cycles_group_trucks_and_dumps():
    spec = reference_spec(buckets_per_truck=3, trucks_per_dump=2)
    _, digs, cycles = generate_scenario(spec)
    dump_of = {}
    for c in cycles:
        assert dump_of.setdefault(c.truck_id, c.dump_id) == c.dump_id
    assert len(set(dump_of.values())) == -(-len(dump_of) // 2)


def test_same_seed_same_bytes(tmp_path):
    out = []
    for k in range(2):
        model, digs, cycles = generate_scenario(reference_spec(seed=11))
        d = tmp_path / str(k)
        d.mkdir()
        write_blocks(model, d / "blocks.csv")
        write_digs(digs, d / "digs.csv")
        write_cycles(cycles, d / "cycles.csv")
        out.append([(d / f).read_bytes() for f in ("blocks.csv", "digs.csv", "cycles.csv")])
    assert out[0] == out[1]
    other = generate_scenario(reference_spec(seed=12))[1]
    assert [d.position for d in other] != [d.position for d in generate_scenario(reference_spec(seed=11))[1]]


def test_invalid_spec():
    with pytest.raises(ValueError):
        ScenarioSpec(block_size=0)
    with pytest.raises(ValueError):
        ScenarioSpec(buckets_per_truck=0)


def test_oracle_homogeneous_world():
    m = uniform_bench(mean=58.0, std=1.7)
    r = mc_oracle_bucket(DigEvent(1, (20.0, 20.0, 5.0), "B1"), m, FULL_CORR, PipelineConfig(), 20_000, seed=3)
    assert abs(r.mean - 58.0) < 4 * r.se_mean
    assert r.std == pytest.approx(1.7, rel=0.04)


def test_oracle_one_block_world():
    m = box_model([[0, 0, 5]], (200, 200, 10), 60.0, 2.0)
    cov = CovarianceModel(noise=0.0, jitter=0.0)
    r = mc_oracle_bucket(DigEvent(1, (0.0, 0.0, 5.0), "B1"), m, cov, PipelineConfig(), 20_000, seed=5)
    assert abs(r.mean - 60.0) < 4 * r.se_mean
    assert r.std == pytest.approx(2.0, rel=0.03)


def test_oracle_deterministic(reference):
    model, digs, _ = reference
    cfg = PipelineConfig()
    a = mc_oracle_bucket(digs[2], model, None, cfg, 20_000, seed=9)
    b = mc_oracle_bucket(digs[2], model, None, cfg, 20_000, seed=9)
    c = mc_oracle_bucket(digs[2], model, None, cfg, 20_000, seed=10)
    assert a == b
    assert a != c
    ta = mc_oracle_truck(digs[:3], model, None, cfg, 10_000, seed=1)
    assert ta == mc_oracle_truck(digs[:3], model, None, cfg, 10_000, seed=1)


def test_oracle_standard_error_scaling(reference):
    model, digs, _ = reference
    boundary = min(digs, key=lambda d: abs(d.position[1]))
    cfg = PipelineConfig()
    small = mc_oracle_bucket(boundary, model, None, cfg, 20_000, seed=2)
    large = mc_oracle_bucket(boundary, model, None, cfg, 80_000, seed=2)
    assert small.se_mean / large.se_mean == pytest.approx(2.0, rel=0.2)
    assert small.se_std / large.se_std == pytest.approx(2.0, rel=0.2)


def test_single_bucket_truck_oracle_matches_bucket_oracle(reference):
    model, digs, _ = reference
    cfg = PipelineConfig()
    b = mc_oracle_bucket(digs[7], model, None, cfg, 40_000, seed=4)
    t = mc_oracle_truck([digs[7]], model, None, cfg, 40_000, seed=4)
    se = np.hypot(b.se_mean, t.se_mean)
    assert abs(b.mean - t.mean) < 4 * se
    assert abs(b.std - t.std) < 4 * np.hypot(b.se_std, t.se_std)


def test_oracle_sample_floor(reference):
    model, digs, _ = reference
    with pytest.raises(ValueError):
        mc_oracle_bucket(digs[0], model, None, PipelineConfig(), 5_000)


def test_sqrt_psd():
    s = np.array([[2.0, 1.0], [1.0, 2.0]])
    r = _sqrt_psd(s)
    np.testing.assert_allclose(r @ r.T, s, atol=1e-12)
    np.testing.assert_allclose(_sqrt_psd(np.ones((2, 2))) @ _sqrt_psd(np.ones((2, 2))).T, np.ones((2, 2)), atol=1e-12)
    with pytest.raises(NumericalError):
        _sqrt_psd(np.array([[1.0, 0.0], [0.0, -0.5]]))
