from __future__ import annotations

import numpy as np
import pytest

from mdiqcc.chernoff import chernoff_b, expectation_lower, expectation_upper
from mdiqcc.decoy import h_term, s_minus, s_plus
from mdiqcc.finite import (
    SMINUS_VARIABLES,
    SPLUS_VARIABLES,
    FiniteKeyAnalysis,
    build_sminus_problem,
    build_splus_problem,
    finite_key_rate,
    h_range,
)
from mdiqcc.model import COMBOS, FIELD_SOURCE, CountLedger, GainTable

EPS = 1e-10


@pytest.mark.parametrize("tag", ["14p1", "17p8", "21p5"])
def test_lp_optima_bracket_plug_in_values(field_ledgers, tag):
    ledger = field_ledgers[tag]
    sp = build_splus_problem(ledger, FIELD_SOURCE, EPS)
    sm = build_sminus_problem(ledger, FIELD_SOURCE, EPS)
    plug_sp = sp.value([ledger.m(c) for c in SPLUS_VARIABLES])
    plug_sm = sm.value([ledger.m(c) for c in SMINUS_VARIABLES])
    s_low, s_high = sp.solve(), sm.solve()
    assert s_low <= plug_sp
    assert s_high >= plug_sm
    # Relaxations: dropping the joint rows can only move the optimum outward.
    assert s_low >= sp.value(sp.lower) * (1 - 1e-12)
    assert s_high <= sm.value(sm.upper) * (1 + 1e-12)


def test_plug_in_objective_matches_gain_formula(field_ledgers):
    ledger = field_ledgers["14p1"]
    gains = GainTable.from_ledger(ledger)
    sp = build_splus_problem(ledger, FIELD_SOURCE, EPS)
    assert sp.value([ledger.m(c) for c in SPLUS_VARIABLES]) == pytest.approx(
        s_plus(gains, FIELD_SOURCE), rel=1e-12)
    sm = build_sminus_problem(ledger, FIELD_SOURCE, EPS)
    assert sm.value([ledger.m(c) for c in SMINUS_VARIABLES]) == pytest.approx(
        s_minus(gains, FIELD_SOURCE), rel=1e-12)


def test_joint_rows_cover_all_subsets(field_ledgers):
    sp = build_splus_problem(field_ledgers["14p1"], FIELD_SOURCE, EPS)
    sm = build_sminus_problem(field_ledgers["14p1"], FIELD_SOURCE, EPS)
    assert len(sp.subsets) == 26
    assert len(sm.subsets) == 11


def test_joint_row_bounds_use_summed_counts(field_ledgers):
    ledger = field_ledgers["17p8"]
    sp = build_splus_problem(ledger, FIELD_SOURCE, EPS)
    b = chernoff_b(EPS)
    for subset, rhs in zip(sp.subsets, sp.rhs):
        total = sum(ledger.m(SPLUS_VARIABLES[i]) for i in subset)
        assert rhs == pytest.approx(expectation_lower(total, b))


@pytest.mark.parametrize("tag", ["14p1", "21p5"])
def test_vacuum_range_brackets_plug_in(field_ledgers, tag):
    ledger = field_ledgers[tag]
    lo, hi = h_range(ledger, FIELD_SOURCE, EPS)
    plug = h_term(GainTable.from_ledger(ledger), FIELD_SOURCE)
    assert lo <= plug <= hi


def test_bounds_tighten_with_more_data(field_ledgers):
    base = field_ledgers["14p1"]
    gains = GainTable.from_ledger(base)
    wide = FiniteKeyAnalysis(base, FIELD_SOURCE, epsilon=EPS)
    big = FiniteKeyAnalysis(base.scaled(1e6), FIELD_SOURCE, epsilon=EPS)
    assert big.h_high - big.h_low < 0.01 * (wide.h_high - wide.h_low)
    assert big.s_plus == pytest.approx(s_plus(gains, FIELD_SOURCE), rel=1e-2)
    assert big.s_minus == pytest.approx(s_minus(gains, FIELD_SOURCE), rel=1e-2)


def test_rate_increases_with_epsilon_when_counts_are_large(field_ledgers):
    # Scaled so that every nonzero count sits above the 6b switch for all
    # three epsilons; across that switch the two bound formulas differ.
    ledger = field_ledgers["17p8"].scaled(100.0)
    rates = [finite_key_rate(ledger, FIELD_SOURCE, epsilon=e, h_scan_points=8).rate_per_pulse
             for e in (1e-10, 1e-8, 1e-6)]
    assert rates[0] <= rates[1] <= rates[2]


def test_scan_minimum_is_below_dense_grid(field_ledgers):
    ana = FiniteKeyAnalysis(field_ledgers["21p5"], FIELD_SOURCE, epsilon=EPS)
    rate, h_star = ana.scan(16)
    dense = [ana.rate(h) for h in np.linspace(ana.h_low, ana.h_high, 257)]
    assert rate <= min(dense) + 1e-18
    assert ana.h_low <= h_star <= ana.h_high


@pytest.mark.parametrize("tag", ["14p1", "17p8", "21p5"])
def test_margin_equals_rate_where_positive(field_ledgers, tag):
    ana = FiniteKeyAnalysis(field_ledgers[tag], FIELD_SOURCE, epsilon=EPS)
    for h in np.linspace(ana.h_low, ana.h_high, 9):
        r, m = ana.rate(h), ana.margin(h)
        if r > 0:
            assert m == pytest.approx(r, rel=1e-12)
        else:
            assert m <= 0


def test_chernoff_application_count(field_ledgers):
    report = finite_key_rate(field_ledgers["14p1"], FIELD_SOURCE, h_scan_points=4)
    assert report.chernoff_applications == 64
    assert report.failure_budget == pytest.approx(6.4e-9)


def test_no_key_without_signal(field_ledgers):
    base = field_ledgers["14p1"]
    coinc = {c: 0 for c in COMBOS}
    errors = {k: 0 for k in base.errors}
    report = finite_key_rate(CountLedger(base.pulses, coinc, errors), FIELD_SOURCE, h_scan_points=4)
    assert report.rate_per_pulse == 0.0
    assert report.reason


def test_expectation_upper_used_for_x_errors(field_ledgers):
    ledger = field_ledgers["14p1"]
    ana = FiniteKeyAnalysis(ledger, FIELD_SOURCE, epsilon=EPS)
    b = chernoff_b(EPS)
    assert ana.exx_high == pytest.approx(expectation_upper(882539, b) / 2.6528e12)
