from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdiqcc.channel import expected_gains, single_photon_error, single_photon_yield
from mdiqcc.decoy import (
    asymptotic_bounds,
    binary_entropy,
    e111_upper,
    h_term,
    key_rate_four_intensity,
    s_minus,
    s_plus,
    y111_lower,
)
from mdiqcc.model import FIELD_SOURCE, SourceSpec, SystemModel

N_MAX = 10


def _poisson(mu):
    return np.array([math.exp(-mu) * mu**k / math.factorial(k) for k in range(N_MAX + 1)])


def _synthetic_gains(source, yields, errors):
    """Gains of every X-basis combination from a photon-number yield table."""
    tokens = "xyo"
    gains, err = {}, {}
    for combo in itertools.product(tokens, repeat=3):
        p = [_poisson(source.intensity(t)) for t in combo]
        w = np.einsum("i,j,k->ijk", *p)
        key = "".join(combo)
        gains[key] = float(np.sum(w * yields))
        err[key] = float(np.sum(w * errors))
    return gains, err


@st.composite
def yield_tables(draw):
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rng = np.random.default_rng(seed)
    shape = (N_MAX + 1,) * 3
    # Mix of tiny and order-one yields so that no single scale dominates.
    y = rng.uniform(0, 1, shape) ** rng.uniform(1, 8)
    e = y * rng.uniform(0, 1, shape)
    vac = np.zeros(shape, dtype=bool)
    vac[0, :, :] = vac[:, 0, :] = vac[:, :, 0] = True
    e[vac] = y[vac] / 2.0
    return y, e


@settings(max_examples=60, deadline=None)
@given(yield_tables(), st.sampled_from([FIELD_SOURCE,
                                        SourceSpec(0.3, 0.01, 0.2, 0.5, 0.3, 0.1, 0.1),
                                        SourceSpec(0.1, 0.05, 0.08, 0.4, 0.3, 0.2, 0.1)]))
def test_elimination_never_exceeds_true_yield(table, source):
    y, e = table
    gains, err = _synthetic_gains(source, y, e)
    h = h_term(gains, source)
    y_low = y111_lower(s_plus(gains, source), s_minus(gains, source), h, source)
    assert y_low <= y[1, 1, 1] * (1 + 1e-9) + 1e-15
    e_high = e111_upper(err["xxx"], h, y_low, source)
    if e_high is not None and y_low >= y[1, 1, 1] * 0.999:
        # With a tight yield the phase-error bound must cover the true rate.
        assert e_high >= e[1, 1, 1] / y[1, 1, 1] * (1 - 1e-3) - 1e-12


def test_h_term_isolates_vacuum_components():
    # Yields that are nonzero only when some user sent vacuum.
    y = np.zeros((N_MAX + 1,) * 3)
    y[0, :, :] = 0.3
    y[:, 0, :] = 0.3
    y[:, :, 0] = 0.3
    gains, _ = _synthetic_gains(FIELD_SOURCE, y, y / 2)
    mx = FIELD_SOURCE.mu_x
    p = _poisson(mx)
    w = np.einsum("i,j,k->ijk", p, p, p)
    assert h_term(gains, FIELD_SOURCE) == pytest.approx(float(np.sum(w * y)), rel=1e-9)


@pytest.mark.parametrize("x, expected", [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0),
                                         (0.11, 0.49991596), (1 + 5e-13, 0.0)])
def test_binary_entropy(x, expected):
    assert binary_entropy(x) == pytest.approx(expected, abs=1e-7)


def test_binary_entropy_rejects_far_outside():
    with pytest.raises(ValueError):
        binary_entropy(1.01)


def test_rate_zero_cases():
    assert key_rate_four_intensity(0.0, 0.1, 1e-5, (0.02,) * 3, FIELD_SOURCE) == 0.0
    assert key_rate_four_intensity(1e-2, 0.5, 1e-5, (0.02,) * 3, FIELD_SOURCE) == 0.0


def test_rate_formula_hand_value():
    y, e, q, pairs = 8.7e-3, 0.1504, 9.5156e-6, (0.0192, 0.0193, 0.0219)
    mz = FIELD_SOURCE.mu_z
    h = lambda p: -p * math.log2(p) - (1 - p) * math.log2(1 - p)  # noqa: E731
    expected = 0.33**3 * (mz**3 * math.exp(-3 * mz) * y * (1 - h(e)) - q * 1.16 * h(0.0219))
    assert key_rate_four_intensity(y, e, q, pairs, FIELD_SOURCE) == pytest.approx(expected)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(0.0, 0.6), st.floats(0.0, 0.6),
       st.floats(0.0, 0.6), st.floats(0.0, 0.3))
def test_rate_monotone_in_errors(y, e1, e2, q1, dq):
    lo_e, hi_e = sorted((e1, e2))
    base = dict(y111=y, q_z=2e-5, source=FIELD_SOURCE)
    r_lo = key_rate_four_intensity(e111_pz=lo_e, qber_pairs=(q1, 0.01, 0.02), **base)
    r_hi = key_rate_four_intensity(e111_pz=hi_e, qber_pairs=(q1, 0.01, 0.02), **base)
    assert r_hi <= r_lo
    r_more = key_rate_four_intensity(e111_pz=lo_e, qber_pairs=(q1 + dq, 0.01, 0.02), **base)
    assert r_more <= r_lo


@settings(max_examples=12, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 1e-5), st.floats(0.0, 0.03),
       st.floats(0.005, 0.05), st.floats(1.2, 6.0), st.floats(0.05, 0.4))
def test_asymptotic_bounds_are_safe(eta, p_d, e_d, mu_x, ratio, mu_z):
    source = SourceSpec(mu_z, mu_x, mu_x * ratio, 0.4, 0.3, 0.2, 0.1)
    system = SystemModel(eta, eta, eta, p_d=p_d, e_d=e_d)
    gains = expected_gains(source, system, quadrature_points=16)
    y_low, e_high, _ = asymptotic_bounds(gains, source)
    y_true, _ = single_photon_yield(system)
    assert y_low <= y_true * (1 + 1e-6)
    if y_low > 0:
        assert e_high >= single_photon_error(system) * (1 - 1e-6)
