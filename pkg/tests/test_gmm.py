import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from excavgrade.gmm import GaussianMixture, GaussianMoment, cdf, moment_match, pdf

finite = st.floats(-100, 100, allow_nan=False)
positive = st.floats(1e-3, 50, allow_nan=False)


@st.composite
def mixtures(draw, max_components=20):
    n = draw(st.integers(1, max_components))
    w = draw(st.lists(st.floats(0.01, 10), min_size=n, max_size=n))
    mu = draw(st.lists(finite, min_size=n, max_size=n))
    var = draw(st.lists(positive, min_size=n, max_size=n))
    return GaussianMixture.from_unnormalized(w, mu, var)


def test_single_component_is_identity():
    m = moment_match(GaussianMixture([1.0], [59.93], [4.0]))
    assert m == GaussianMoment(59.93, 4.0)


def test_two_equal_components():
    m = moment_match(GaussianMixture.equal([50.0, 60.0], [1.0, 1.0]))
    assert m.mean == pytest.approx(55.0, abs=1e-12)
    assert m.variance == pytest.approx(26.0, abs=1e-12)


def test_two_equal_components_against_sampling():
    rng = np.random.default_rng(1)
    n = 10**6
    pick = rng.integers(0, 2, n)
    x = np.where(pick == 0, 50.0, 60.0) + rng.standard_normal(n)
    se = x.std() / math.sqrt(n)
    assert abs(x.mean() - 55.0) < 4 * se
    assert abs(x.var() - 26.0) < 4 * x.var() * math.sqrt(2.0 / n) * 2


def test_identical_components_collapse():
    m = moment_match(GaussianMixture.from_unnormalized([0.2, 0.3, 0.5], [48.0] * 3, [2.5] * 3))
    assert m.mean == 48.0
    assert m.variance == pytest.approx(2.5, rel=1e-15)


@pytest.mark.parametrize(
    "weights",
    [[0.5, 0.6], [-0.1, 1.1], [float("nan"), 1.0]],
)
def test_weight_validation(weights):
    with pytest.raises(ValueError):
        GaussianMixture(weights, [1.0, 2.0], [1.0, 1.0])


def test_empty_mixture_rejected():
    with pytest.raises(ValueError):
        GaussianMixture([], [], [])
    with pytest.raises(ValueError):
        GaussianMixture.equal([], [])


def test_negative_variance_rejected():
    with pytest.raises(ValueError):
        GaussianMoment(1.0, -1e-3)


def test_arrays_are_read_only():
    mix = GaussianMixture.equal([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        mix.means[0] = 5.0


@settings(max_examples=200, deadline=None)
@given(mixtures())
def test_moment_match_matches_weighted_sums(mix):
    m = moment_match(mix)
    mean = sum(w * mu for w, mu in zip(mix.weights, mix.means))
    second = sum(w * (v + mu * mu) for w, mu, v in zip(mix.weights, mix.means, mix.variances))
    assert m.mean == pytest.approx(mean, rel=1e-9, abs=1e-9)
    assert m.variance == pytest.approx(second - mean * mean, rel=1e-6, abs=1e-6)
    assert m.variance >= min(mix.variances) - 1e-9
    assert min(mix.means) <= m.mean <= max(mix.means)


@settings(max_examples=100, deadline=None)
@given(mixtures(), st.randoms(use_true_random=False))
def test_moment_match_permutation_invariant(mix, rnd):
    order = list(range(len(mix)))
    rnd.shuffle(order)
    shuffled = GaussianMixture.from_unnormalized(mix.weights[order], mix.means[order], mix.variances[order])
    a, b = moment_match(mix), moment_match(shuffled)
    assert a.mean == pytest.approx(b.mean, rel=1e-12, abs=1e-12)
    assert a.variance == pytest.approx(b.variance, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(mixtures(), st.data())
def test_moment_match_split_invariant(mix, data):
    k = data.draw(st.integers(0, len(mix) - 1))
    w = np.concatenate([mix.weights, [mix.weights[k] / 2]])
    w[k] /= 2
    split = GaussianMixture.from_unnormalized(
        w, np.append(mix.means, mix.means[k]), np.append(mix.variances, mix.variances[k])
    )
    a, b = moment_match(mix), moment_match(split)
    assert a.mean == pytest.approx(b.mean, rel=1e-12, abs=1e-12)
    assert a.variance == pytest.approx(b.variance, rel=1e-9, abs=1e-9)


def test_pdf_standard_normal_peak():
    assert pdf(GaussianMixture([1.0], [0.0], [1.0]), 0.0) == pytest.approx(0.39894228, abs=1e-8)


def test_pdf_symmetric_pair():
    a = 1.7
    pair = GaussianMixture.equal([-a, a], [1.0, 1.0])
    single = GaussianMixture([1.0], [a], [1.0])
    assert pdf(pair, 0.0) == pytest.approx(pdf(single, 0.0), rel=1e-14)


def test_pdf_rejects_zero_variance():
    with pytest.raises(ValueError):
        pdf(GaussianMixture([1.0], [0.0], [0.0]), 0.0)


def _envelope(mix):
    sd = np.sqrt(mix.variances)
    return float((mix.means - 12 * sd).min()), float((mix.means + 12 * sd).max())


@settings(max_examples=30, deadline=None)
@given(mixtures(max_components=6))
def test_pdf_integrates_to_one(mix):
    lo, hi = _envelope(mix)
    pts = sorted(set(np.clip(mix.means, lo, hi)))
    total, _ = integrate.quad(lambda x: pdf(mix, x), lo, hi, points=pts, limit=500, epsabs=1e-12, epsrel=1e-12)
    assert total == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(mixtures(max_components=6), st.floats(0, 1))
def test_cdf_matches_integrated_pdf(mix, u):
    lo, hi = _envelope(mix)
    x = lo + u * (hi - lo)
    pts = [p for p in sorted(set(mix.means)) if lo < p < x]
    area, _ = integrate.quad(lambda t: pdf(mix, t), lo, x, points=pts or None, limit=500, epsabs=1e-13, epsrel=1e-12)
    assert cdf(mix, x) == pytest.approx(area, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(mixtures())
def test_cdf_monotone_with_limits(mix):
    lo, hi = _envelope(mix)
    xs = np.linspace(lo - 10, hi + 10, 400)
    c = cdf(mix, xs)
    assert np.all(np.diff(c) >= 0)
    assert cdf(mix, -np.inf) == 0.0
    assert cdf(mix, np.inf) == pytest.approx(1.0, abs=1e-12)


def test_cdf_median_of_symmetric_pair():
    mix = GaussianMixture.equal([50.0, 60.0], [1.0, 4.0])
    mid = GaussianMixture.equal([50.0, 60.0], [2.0, 2.0])
    assert cdf(mid, 55.0) == pytest.approx(0.5, abs=1e-15)
    assert 0 < cdf(mix, 55.0) < 1


def test_cdf_point_mass():
    mix = GaussianMixture.equal([1.0, 3.0], [0.0, 1.0])
    assert cdf(mix, 0.999) == pytest.approx(0.5 * cdf(GaussianMixture([1.0], [3.0], [1.0]), 0.999))
    assert cdf(mix, 1.0) >= 0.5
