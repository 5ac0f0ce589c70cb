import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairscope import ot
from fairscope.errors import SupportTooWideError
from oracles import lp_transport_cost

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
samples = st.lists(finite, min_size=1, max_size=12)


def unif(*v):
    return ot.from_samples(v)


@st.composite
def weighted(draw, max_atoms=6):
    k = draw(st.integers(1, max_atoms))
    vals = draw(st.lists(finite, min_size=k, max_size=k))
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    return ot.from_samples(vals, w)


# ---- frozen values (oracle: coupling LP in tests/oracles.py) ----

def test_w1_two_point():
    assert ot.wasserstein(unif(0, 1), unif(0, 2)) == pytest.approx(0.5, abs=1e-15)


def test_symmetric_spread_efforts():
    dec = ot.signed_efforts(unif(-1, 1), unif(0))
    assert (dec.right_effort, dec.left_effort) == pytest.approx((0.5, 0.5), abs=1e-15)
    assert dec.total == pytest.approx(1.0, abs=1e-15)


def test_contracting_cost():
    assert ot.monotone_coupling(unif(0, 10), unif(4, 6)).cost(1) == pytest.approx(4.0, abs=1e-12)


def test_cdf_integral_shifted_pair():
    assert ot.cdf_distance_integral(unif(0, 2), unif(1, 3)) == pytest.approx(1.0, abs=1e-15)


def test_d_rc_frozen():
    assert ot.d_rc_bounded(unif(0, 1), unif(0.5, 1), 1.0) == pytest.approx(0.25, abs=1e-15)


def test_weighted_efforts_frozen():
    d0 = ot.from_samples([0, 1, 3], [0.2, 0.5, 0.3])
    d1 = ot.from_samples([1, 2], [0.6, 0.4])
    dec = ot.signed_efforts(d0, d1, 1)
    assert dec.right_effort == pytest.approx(0.3, abs=1e-14)
    assert dec.left_effort == pytest.approx(0.3, abs=1e-14)
    assert ot.signed_efforts(d0, d1, 2).total == pytest.approx(0.6, abs=1e-14)


# ---- construction and validation ----

def test_from_samples_normalises_and_sorts():
    d = ot.from_samples([3.0, 1.0, 2.0], [2, 1, 1])
    assert d.values.tolist() == [1.0, 2.0, 3.0]
    assert d.weights.tolist() == [0.25, 0.25, 0.5]
    assert d.cumulative[-1] == 1.0


@pytest.mark.parametrize("vals,w", [([], None), ([1.0, np.nan], None), ([1.0], [0.0]), ([1.0, 2.0], [1.0])])
def test_from_samples_rejects(vals, w):
    with pytest.raises(ValueError):
        ot.from_samples(vals, w)


def test_distribution_is_read_only():
    d = unif(1, 2)
    with pytest.raises(ValueError):
        d.values[0] = 5.0


def test_quantile_domain():
    d = unif(1, 2)
    with pytest.raises(ValueError):
        ot.quantile(d, 0.0)
    assert ot.quantile(d, 0.5) == 1.0
    assert ot.quantile(d, 0.5000001) == 2.0
    assert ot.quantile(d, 1.0) == 2.0


def test_cdf_is_right_continuous():
    d = unif(1, 2)
    assert ot.cdf(d, 1.0) == 0.5
    assert ot.cdf(d, 0.999) == 0.0
    assert ot.cdf(d, 2.0) == 1.0


def test_order_must_be_at_least_one():
    with pytest.raises(ValueError):
        ot.signed_efforts(unif(0), unif(1), q=0)


def test_d_rc_rejects_wide_support():
    with pytest.raises(SupportTooWideError):
        ot.d_rc_bounded(unif(0, 1), unif(3), 1.0)


def test_coupling_matrix_marginals():
    d0 = ot.from_samples([0, 1, 3], [0.2, 0.5, 0.3])
    d1 = ot.from_samples([1, 2], [0.6, 0.4])
    gamma = ot.monotone_coupling(d0, d1).as_matrix(d0, d1)
    np.testing.assert_allclose(gamma.sum(axis=1), [0.2, 0.5, 0.3], atol=1e-15)
    np.testing.assert_allclose(gamma.sum(axis=0), [0.6, 0.4], atol=1e-15)


# ---- properties ----

@settings(max_examples=150, deadline=None)
@given(weighted(5), weighted(5), st.sampled_from([1, 2]))
def test_matches_lp_oracle(d0, d1, q):
    lp = lp_transport_cost(d0.values, d0.weights, d1.values, d1.weights, q)
    assert ot.signed_efforts(d0, d1, q).total == pytest.approx(lp, abs=1e-9)


@given(weighted(), weighted())
def test_efforts_partition_the_total(d0, d1):
    dec = ot.signed_efforts(d0, d1)
    assert dec.left_effort >= 0 and dec.right_effort >= 0
    assert dec.total == pytest.approx(dec.left_effort + dec.right_effort, abs=1e-12)
    assert dec.right_effort - dec.left_effort == pytest.approx(d1.mean - d0.mean, abs=1e-9)


@given(weighted(), weighted())
def test_reversing_swaps_directions(d0, d1):
    a, b = ot.signed_efforts(d0, d1), ot.signed_efforts(d1, d0)
    assert a.left_effort == pytest.approx(b.right_effort, abs=1e-12)
    assert a.right_effort == pytest.approx(b.left_effort, abs=1e-12)


@given(weighted(), weighted())
def test_quantile_and_cdf_routes_agree(d0, d1):
    assert ot.wasserstein(d0, d1) == pytest.approx(ot.cdf_distance_integral(d0, d1), abs=1e-9)


@given(weighted(), weighted(), weighted())
def test_triangle_inequality(a, b, c):
    assert ot.wasserstein(a, c) <= ot.wasserstein(a, b) + ot.wasserstein(b, c) + 1e-9


@given(weighted())
def test_self_distance_zero(d):
    assert ot.wasserstein(d, d) == 0.0


@given(weighted(), weighted(), st.sampled_from([0.5, 2.0, 10.0]), st.floats(-5, 5))
def test_affine_scaling(d0, d1, c, b):
    w = ot.wasserstein(d0, d1)
    assert ot.wasserstein(d0.shifted(c, b), d1.shifted(c, b)) == pytest.approx(c * w, rel=1e-12, abs=1e-12)


@given(weighted(), st.floats(-5, 5))
def test_translation_cost(d, b):
    dec = ot.signed_efforts(d, d.shifted(1.0, b))
    assert dec.total == pytest.approx(abs(b), abs=1e-9)
    assert (dec.left_effort if b > 0 else dec.right_effort) == pytest.approx(0.0, abs=1e-9)


@given(weighted(), weighted())
def test_coupling_cost_matches(d0, d1):
    cpl = ot.monotone_coupling(d0, d1)
    assert cpl.cost(1) == pytest.approx(ot.wasserstein(d0, d1), abs=1e-12)
    assert math.fsum(cpl.p_hi - cpl.p_lo) == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(cpl.source) >= 0) and np.all(np.diff(cpl.target) >= 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_lipschitz_lower_bound_below_d_rc(a, b):
    d0, d1 = ot.from_samples(a), ot.from_samples(b)
    exact = ot.d_rc_bounded(d0, d1, 1.0)
    lb = ot.lipschitz_test_lower_bound(d0, d1, 1.0, n_starts=4)
    assert lb <= exact + 1e-12
    assert lb >= 0.98 * exact - 1e-12


# ---- documented examples ----

def test_small_examples():
    d = unif(1, 2, 3)
    assert ot.cdf(unif(0), -1.0) == 0.0
    assert ot.cdf(d, 2.0) == pytest.approx(2 / 3)
    assert ot.cdf(d, 2 - 1e-9) == pytest.approx(1 / 3)
    assert ot.quantile(d, 0.5) == 2.0
    assert ot.quantile(d, 1 / 3) == 1.0
    assert ot.quantile(unif(5), 0.77) == 5.0
    assert ot.wasserstein(unif(0), unif(0.3)) == pytest.approx(0.3)
    dec = ot.signed_efforts(unif(0), unif(1))
    assert (dec.left_effort, dec.right_effort) == (0.0, 1.0)
    assert ot.d_rc_bounded(unif(0), unif(1), 2.0) == 0.5
    assert ot.from_samples([1, 1, 2], [1, 1, 2]).weights.tolist() == [0.25, 0.25, 0.5]


def test_coupling_segments():
    assert ot.monotone_coupling(unif(0), unif(1)).segments == [(0.0, 1.0, 0.0, 1.0)]
    assert ot.monotone_coupling(unif(1, 2), unif(3, 4)).segments == [(0.0, 0.5, 1.0, 3.0), (0.5, 1.0, 2.0, 4.0)]


def test_tiny_weights_rejected():
    with pytest.raises(ValueError):
        ot.from_samples([0.0, 1.0], [1.0, 1e-18])
