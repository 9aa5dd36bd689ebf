from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from mdiqcc.chernoff import (
    chernoff_b,
    chernoff_expectation_bounds,
    chernoff_observation_bounds,
    expectation_lower,
    expectation_upper,
    observation_lower,
    observation_upper,
)

B = chernoff_b(1e-10)


def _root_oracle(chi, b, side):
    """Roots of chi - y + chi*ln(y/chi) + b = 0 via scipy (independent of the package)."""
    g = lambda y: chi - y + chi * math.log(y / chi) + b  # noqa: E731
    if side == "low":
        return brentq(g, 1e-300, chi, xtol=1e-300, rtol=1e-14)
    hi = chi + b
    while g(hi) > 0:
        hi *= 2
    return brentq(g, chi, hi, rtol=1e-14)


def test_b_value():
    assert B == pytest.approx(math.log(2e10))


def test_b_rejects_out_of_range_epsilon():
    with pytest.raises(ValueError):
        chernoff_b(0.0)


@pytest.mark.parametrize("chi", [0.5, 3.0, 20.0, 100.0, 6 * B - 1e-6])
def test_exact_regime_matches_root_oracle(chi):
    assert expectation_lower(chi, B) == pytest.approx(_root_oracle(chi, B, "low"), rel=1e-10)
    assert expectation_upper(chi, B) == pytest.approx(_root_oracle(chi, B, "high"), rel=1e-10)


@pytest.mark.parametrize("chi", [1e3, 2.2e5, 6.85e6])
def test_approximation_regime_closed_form(chi):
    d = (3 * B + math.sqrt(8 * B * chi + B * B)) / (2 * (chi - B))
    assert expectation_lower(chi, B) == pytest.approx(chi / (1 + d), rel=1e-14)
    assert expectation_upper(chi, B) == pytest.approx(chi / (1 - d), rel=1e-14)


def test_approximation_is_looser_than_exact_root_in_approximation_regime():
    # The closed form is conservative relative to the exact tail bound.
    for chi in (6 * B + 1, 500.0, 1e4, 1e6):
        assert expectation_upper(chi, B) >= _root_oracle(chi, B, "high")
        assert expectation_lower(chi, B) <= _root_oracle(chi, B, "low")


def test_zero_observation():
    iv = chernoff_expectation_bounds(0.0, 1e-10)
    assert iv.low == 0.0 and iv.high == pytest.approx(B)


def test_zero_mean_observation_warns():
    iv = chernoff_observation_bounds(0.0, 1e-10)
    assert (iv.low, iv.high) == (0.0, 0.0)
    assert iv.warning


def test_observation_bound_formula():
    m = 1234.5
    d = (B + math.sqrt(B * B + 8 * B * m)) / (2 * m)
    assert observation_upper(m, B) == pytest.approx((1 + d) * m)
    assert observation_lower(m, B) == pytest.approx(max((1 - d) * m, 0.0))


def test_negative_count_rejected():
    with pytest.raises(ValueError):
        expectation_lower(-1.0, B)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e12), st.floats(min_value=1e-12, max_value=0.5))
def test_intervals_contain_the_point(chi, eps):
    iv = chernoff_expectation_bounds(chi, eps)
    assert iv.low <= chi <= iv.high
    ov = chernoff_observation_bounds(chi, eps)
    assert ov.low <= chi <= ov.high


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=1.0, max_value=1e10), st.floats(min_value=1.01, max_value=100.0))
def test_intervals_shrink_relatively_with_count(chi, factor):
    # Relative half-width decreases as the count grows (within one regime).
    small, big = chi, chi * factor
    if (small < 6 * B) != (big < 6 * B):
        return
    w_small = (expectation_upper(small, B) - expectation_lower(small, B)) / small
    w_big = (expectation_upper(big, B) - expectation_lower(big, B)) / big
    assert w_big <= w_small * (1 + 1e-9)


@pytest.mark.parametrize("mean", [3.0, 40.0, 900.0])
def test_coverage_at_loose_epsilon(mean):
    eps = 1e-3
    b = chernoff_b(eps)
    rng = np.random.default_rng(11)
    draws = rng.poisson(mean, size=10_000)
    miss_exp = sum(not (expectation_lower(x, b) <= mean <= expectation_upper(x, b)) for x in draws)
    lo, hi = observation_lower(mean, b), observation_upper(mean, b)
    miss_obs = int(np.sum((draws < lo) | (draws > hi)))
    assert miss_exp / draws.size <= eps
    assert miss_obs / draws.size <= eps
