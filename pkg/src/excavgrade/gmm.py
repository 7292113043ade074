"""Scalar Gaussian mixtures and their reduction to a single Gaussian."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class GaussianMoment:
    """Mean and variance of a scalar Gaussian (Fe wt%, (Fe wt%)^2)."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise ValueError(f"non-finite moment ({self.mean}, {self.variance})")
        if self.variance < 0:
            raise ValueError(f"negative variance {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


class GaussianMixture:
    """Weighted list of scalar Gaussian components.

    Weights must already sum to one (within ``WEIGHT_TOL``); use
    :meth:`from_unnormalized` or :meth:`equal` to build one from raw weights.

    Parameters
    ----------
    weights, means, variances : array-like
        One entry per component.
    """

    __slots__ = ("weights", "means", "variances")

    def __init__(self, weights, means, variances) -> None:
        w = np.array(weights, dtype=float, ndmin=1)
        m = np.array(means, dtype=float, ndmin=1)
        v = np.array(variances, dtype=float, ndmin=1)
        if w.ndim != 1 or not (w.shape == m.shape == v.shape):
            raise ValueError("weights, means and variances must be 1-d and equally long")
        if w.size == 0:
            raise ValueError("mixture needs at least one component")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValueError("mixture contains non-finite values")
        if np.any(w < 0):
            raise ValueError("mixture weights must be non-negative")
        if np.any(v < 0):
            raise ValueError("component variances must be non-negative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, expected 1")
        for arr in (w, m, v):
            arr.flags.writeable = False
        self.weights = w
        self.means = m
        self.variances = v

    @classmethod
    def from_unnormalized(cls, weights, means, variances) -> GaussianMixture:
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise ValueError("weights must have a positive sum")
        return cls(w / total, means, variances)

    @classmethod
    def equal(cls, means, variances) -> GaussianMixture:
        m = np.asarray(means, dtype=float)
        if m.size == 0:
            raise ValueError("mixture needs at least one component")
        return cls(np.full(m.shape, 1.0 / m.size), m, variances)

    @classmethod
    def from_components(cls, components) -> GaussianMixture:
        """Build from ``[(weight, GaussianMoment), ...]``."""
        comps = list(components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        return cls(
            [w for w, _ in comps],
            [g.mean for _, g in comps],
            [g.variance for _, g in comps],
        )

    @property
    def components(self) -> list[tuple[float, GaussianMoment]]:
        return [
            (float(w), GaussianMoment(float(m), float(v)))
            for w, m, v in zip(self.weights, self.means, self.variances)
        ]

    def __len__(self) -> int:
        return self.weights.size

    def __repr__(self) -> str:
        return f"GaussianMixture(n_components={len(self)})"


def moment_match(mix: GaussianMixture) -> GaussianMoment:
    """Collapse a mixture to the Gaussian with the same first two moments.

    mean = sum_j w_j mu_j
    var  = sum_j w_j (sigma_j^2 + (mu_j - mean)^2)
    """
    if mix is None or len(mix) == 0:
        raise ValueError("cannot moment-match an empty mixture")
    w, mu, var = mix.weights, mix.means, mix.variances
    mean = float(np.dot(w, mu))
    spread = mu - mean
    variance = float(np.dot(w, var + spread * spread))
    # keep the mean inside the component range despite rounding
    mean = min(max(mean, float(mu.min())), float(mu.max()))
    return GaussianMoment(mean, max(variance, 0.0))


def pdf(mix: GaussianMixture, x):
    """Mixture density at ``x`` (scalar or array)."""
    if np.any(mix.variances <= 0):
        raise ValueError("pdf needs strictly positive component variances")
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(mix.variances)
    z = (x[..., None] - mix.means) / sd
    dens = np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
    out = dens @ mix.weights
    return float(out) if out.ndim == 0 else out


def cdf(mix: GaussianMixture, x):
    """Mixture cumulative distribution at ``x``.

    Zero-variance components are treated as point masses.
    """
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(mix.variances)
    diff = x[..., None] - mix.means
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), np.where(diff >= 0, np.inf, -np.inf))
    out = np.clip(ndtr(z) @ mix.weights, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def normal_pdf(x, moment: GaussianMoment):
    if moment.variance <= 0:
        raise ValueError("pdf needs a strictly positive variance")
    x = np.asarray(x, dtype=float)
    z = (x - moment.mean) / moment.std
    return np.exp(-0.5 * z * z) / (moment.std * math.sqrt(2.0 * math.pi))
