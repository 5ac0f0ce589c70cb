"""Exact optimal transport on the real line for weighted empirical measures.

Every quantity here is computed on the merged cumulative-weight breakpoints
of the two distributions involved.  Between consecutive breakpoints both
quantile functions are constant, so the quantile integrals are finite sums
and no discretisation grid is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import SupportTooWideError

MIN_WEIGHT = 1e-15


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Weighted atoms on the real line, sorted ascending.

    Ties are allowed and represent a single atom split across entries.
    ``cumulative`` holds the right-continuous CDF at each atom; its last
    entry is pinned to exactly 1.
    """

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("distribution needs at least one atom")
        if weights.shape != values.shape:
            raise ValueError("values and weights differ in length")
        if not np.all(np.isfinite(values)):
            raise ValueError("distribution values must be finite")
        if np.any(np.diff(values) < 0):
            raise ValueError("values must be sorted ascending")
        if np.any(weights < MIN_WEIGHT):
            raise ValueError("weights must be at least %g after normalisation" % MIN_WEIGHT)
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "weights", _frozen(weights))
        n = values.size
        if np.all(weights == weights[0]):
            # k/n is correctly rounded; a cumsum of 1/n drifts.
            cum = np.arange(1, n + 1, dtype=float) / n
        else:
            cum = np.cumsum(weights)
            cum[-1] = 1.0
            cum = np.minimum(cum, 1.0)
        object.__setattr__(self, "cumulative", _frozen(cum))

    def __len__(self):
        return self.values.size

    @property
    def mean(self) -> float:
        return math.fsum(self.values * self.weights)

    def shifted(self, c: float = 1.0, b: float = 0.0) -> "EmpiricalDistribution":
        """Pushforward under ``x -> c*x + b`` for ``c > 0``."""
        if c <= 0:
            raise ValueError("scale must be positive")
        return EmpiricalDistribution(c * self.values + b, self.weights)


@dataclass(frozen=True)
class TransportDecomposition:
    """Raw q-th power transport costs split by direction of movement.

    ``right_effort`` collects mass of the source moved to larger values,
    ``left_effort`` mass moved to smaller values.  ``total`` is their sum,
    i.e. W_q**q.
    """

    total: float
    left_effort: float
    right_effort: float
    order: int


@dataclass(frozen=True, eq=False)
class MonotoneCoupling:
    """The order-preserving coupling as a list of constant pieces on (0, 1]."""

    p_lo: np.ndarray
    p_hi: np.ndarray
    source: np.ndarray
    target: np.ndarray

    @property
    def segments(self):
        return list(zip(self.p_lo.tolist(), self.p_hi.tolist(),
                        self.source.tolist(), self.target.tolist()))

    def cost(self, q: int = 1) -> float:
        return math.fsum(np.abs(self.target - self.source) ** q * (self.p_hi - self.p_lo))

    def as_matrix(self, d0: EmpiricalDistribution, d1: EmpiricalDistribution) -> np.ndarray:
        """Coupling mass between the distinct atoms of ``d0`` and ``d1``."""
        xs = np.unique(d0.values)
        ys = np.unique(d1.values)
        gamma = np.zeros((xs.size, ys.size))
        i = np.searchsorted(xs, self.source)
        j = np.searchsorted(ys, self.target)
        np.add.at(gamma, (i, j), self.p_hi - self.p_lo)
        return gamma


def from_samples(values: Sequence[float], weights: Optional[Sequence[float]] = None) -> EmpiricalDistribution:
    """Build a normalised, sorted empirical distribution."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(values)):
        raise ValueError("sample contains non-finite values")
    if weights is None:
        w = np.full(values.size, 1.0 / values.size)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != values.shape:
            raise ValueError("weights must match values in length")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be positive and finite")
        w = w / math.fsum(w)
    order = np.argsort(values, kind="stable")
    return EmpiricalDistribution(values[order], w[order])


def cdf(d: EmpiricalDistribution, t) -> float | np.ndarray:
    """Right-continuous CDF, ``F(t) = sum of weights at values <= t``."""
    t_arr = np.asarray(t, dtype=float)
    idx = np.searchsorted(d.values, t_arr, side="right")
    out = np.where(idx > 0, d.cumulative[np.maximum(idx - 1, 0)], 0.0)
    return float(out) if out.ndim == 0 else out


def quantile(d: EmpiricalDistribution, p) -> float | np.ndarray:
    """Left-continuous generalised inverse ``inf {x : p <= F(x)}`` on (0, 1]."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr > 1)) or np.any(np.isnan(p_arr)):
        raise ValueError("quantile level must lie in (0, 1]")
    idx = np.searchsorted(d.cumulative, p_arr, side="left")
    out = d.values[np.minimum(idx, len(d) - 1)]
    return float(out) if out.ndim == 0 else out


def _merged_segments(d0: EmpiricalDistribution, d1: EmpiricalDistribution):
    """Breakpoints of both CDF level sets and the quantiles on each piece.

    On ``(p[k-1], p[k]]`` each quantile function equals its value at
    ``p[k]`` because the generalised inverse is left-continuous.
    """
    p_hi = np.union1d(d0.cumulative, d1.cumulative)
    p_lo = np.concatenate(([0.0], p_hi[:-1]))
    q0 = d0.values[np.minimum(np.searchsorted(d0.cumulative, p_hi, side="left"), len(d0) - 1)]
    q1 = d1.values[np.minimum(np.searchsorted(d1.cumulative, p_hi, side="left"), len(d1) - 1)]
    return p_lo, p_hi, q0, q1


def signed_efforts(d0: EmpiricalDistribution, d1: EmpiricalDistribution, q: int = 1) -> TransportDecomposition:
    """Split the monotone transport cost of ``d0 -> d1`` by direction.

    Pieces where the quantiles coincide contribute to neither side.
    """
    if q < 1:
        raise ValueError("order q must be >= 1")
    p_lo, p_hi, q0, q1 = _merged_segments(d0, d1)
    diff = q1 - q0
    contrib = np.abs(diff) ** q * (p_hi - p_lo)
    right = math.fsum(contrib[diff > 0])
    left = math.fsum(contrib[diff < 0])
    return TransportDecomposition(total=left + right, left_effort=left, right_effort=right, order=int(q))


def wasserstein(d0: EmpiricalDistribution, d1: EmpiricalDistribution, q: int = 1) -> float:
    """Exact W_q via the quantile representation."""
    total = signed_efforts(d0, d1, q).total
    return total if q == 1 else total ** (1.0 / q)


def monotone_coupling(d0: EmpiricalDistribution, d1: EmpiricalDistribution) -> MonotoneCoupling:
    p_lo, p_hi, q0, q1 = _merged_segments(d0, d1)
    keep = p_hi > p_lo
    return MonotoneCoupling(_frozen(p_lo[keep]), _frozen(p_hi[keep]), _frozen(q0[keep]), _frozen(q1[keep]))


def cdf_distance_integral(d0: EmpiricalDistribution, d1: EmpiricalDistribution) -> float:
    """``integral |F0(t) - F1(t)| dt`` computed exactly on the union of atoms."""
    t = np.union1d(d0.values, d1.values)
    if t.size < 2:
        return 0.0
    gap = np.abs(cdf(d0, t[:-1]) - cdf(d1, t[:-1]))
    return math.fsum(gap * np.diff(t))


def support_width(*dists: EmpiricalDistribution) -> float:
    lo = min(d.values[0] for d in dists)
    hi = max(d.values[-1] for d in dists)
    return float(hi - lo)


def d_rc_bounded(d0: EmpiricalDistribution, d1: EmpiricalDistribution, L: float) -> float:
    """Randomized-classifier distance for supports inside an interval of length ``L``.

    On such supports it equals ``W_1 / L``, which is how it is computed.
    """
    if not L > 0:
        raise ValueError("scale L must be positive")
    width = support_width(d0, d1)
    if width > L:
        raise SupportTooWideError(f"supports span {width!r}, wider than L={L!r}")
    return wasserstein(d0, d1, 1) / L


def _test_function_gap(d0, d1, knots, slopes) -> float:
    """E_d0[phi] - E_d1[phi] for the piecewise-linear phi with given knot slopes."""
    phi_knots = np.concatenate(([0.0], np.cumsum(slopes * np.diff(knots))))
    phi_knots -= phi_knots.min()
    phi0 = np.interp(d0.values, knots, phi_knots)
    phi1 = np.interp(d1.values, knots, phi_knots)
    return math.fsum(d0.weights * phi0) - math.fsum(d1.weights * phi1)


def lipschitz_test_lower_bound(d0: EmpiricalDistribution, d1: EmpiricalDistribution, L: float,
                               n_starts: int = 16, rng: Optional[np.random.Generator] = None) -> float:
    """Lower bound on D_rc from explicit randomized classifiers.

    Each candidate classifier puts probability ``phi(x)`` on label 0, with
    ``phi`` piecewise linear between the atoms, slopes bounded by ``1/L``
    and values shifted into [0, 1].  Starting from random slopes, each
    slope is pushed to whichever bound improves the detected gap.  The
    result never exceeds the true supremum.
    """
    if not L > 0:
        raise ValueError("scale L must be positive")
    if support_width(d0, d1) > L:
        raise SupportTooWideError("supports do not fit in an interval of length L")
    rng = np.random.default_rng(0) if rng is None else rng
    knots = np.union1d(d0.values, d1.values)
    if knots.size < 2:
        return 0.0
    best = 0.0
    smax = 1.0 / L
    for _ in range(n_starts):
        slopes = rng.uniform(-smax, smax, size=knots.size - 1)
        value = _test_function_gap(d0, d1, knots, slopes)
        for k in rng.permutation(slopes.size):
            for candidate in (smax, -smax):
                trial = slopes.copy()
                trial[k] = candidate
                v = _test_function_gap(d0, d1, knots, trial)
                if v > value:
                    slopes, value = trial, v
        best = max(best, value)
    return best
