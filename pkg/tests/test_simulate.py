from __future__ import annotations

import math

import pytest

from mdiqcc.channel import expected_gains, setting_gain
from mdiqcc.model import COMBOS, FIELD_SOURCE, PulseModel, SystemModel
from mdiqcc.simulate import SimPlan, simulate_counts, simulate_hom_scan

SYSTEM = SystemModel(0.6, 0.5, 0.4, p_d=1e-4, e_d=0.02, visibility=0.25)


@pytest.fixture(scope="module")
def gains():
    return expected_gains(FIELD_SOURCE, SYSTEM)


@pytest.fixture(scope="module")
def exact_ledger():
    return simulate_counts(FIELD_SOURCE, SYSTEM, SimPlan(40_000_000, seed=5))


def _within(observed, n, p, sigmas=4.0):
    sd = math.sqrt(max(n * p * (1 - p), 1.0))
    return abs(observed - n * p) <= sigmas * sd


@pytest.mark.parametrize("combo", COMBOS)
def test_exact_engine_agrees_with_forward_model(exact_ledger, gains, combo):
    n = exact_ledger.n(combo)
    assert _within(exact_ledger.m(combo), n, gains[combo])


@pytest.mark.parametrize("combo", ["xxx", "yyy"])
def test_exact_engine_error_counts(exact_ledger, gains, combo):
    m = exact_ledger.m(combo)
    rate = gains.error_gains[combo] / gains[combo]
    assert _within(exact_ledger.error(combo), m, rate)


@pytest.mark.parametrize("pair", ["ab", "ac", "bc"])
def test_exact_engine_pair_errors(exact_ledger, gains, pair):
    m = exact_ledger.m("zzz")
    rate = gains.pair_error_gains[pair] / gains["zzz"]
    assert _within(exact_ledger.error("zzz", pair), m, rate)


def test_row_pulses_follow_selection(exact_ledger):
    n = 40_000_000
    expected = n * FIELD_SOURCE.p_z**3
    assert _within(exact_ledger.n("zzz"), n, FIELD_SOURCE.p_z**3)
    assert exact_ledger.n("zzz") == pytest.approx(expected, rel=0.01)


def test_binomial_engine_agrees_with_forward_model(gains):
    ledger = simulate_counts(FIELD_SOURCE, SYSTEM, SimPlan(10**9, seed=3, engine="binomial"))
    for combo in COMBOS:
        assert _within(ledger.m(combo), ledger.n(combo), gains[combo])


def test_same_seed_same_ledger():
    plan = SimPlan(2_000_000, seed=9)
    a = simulate_counts(FIELD_SOURCE, SYSTEM, plan)
    b = simulate_counts(FIELD_SOURCE, SYSTEM, plan)
    assert a == b


def test_different_seed_different_ledger():
    a = simulate_counts(FIELD_SOURCE, SYSTEM, SimPlan(2_000_000, seed=1))
    b = simulate_counts(FIELD_SOURCE, SYSTEM, SimPlan(2_000_000, seed=2))
    assert a != b


@pytest.mark.parametrize("mode", ["proportional", "fixed"])
def test_worker_count_does_not_change_result(mode):
    kw = dict(seed=4, block_size=1 << 18)
    if mode == "fixed":
        kw.update(mode="fixed", budgets={"zzz": 10**6, "xxx": 700_000, "oxx_sym": 300_001})
        n = 1
    else:
        n = 3_000_000
    one = simulate_counts(FIELD_SOURCE, SYSTEM, SimPlan(n, workers=1, **kw))
    four = simulate_counts(FIELD_SOURCE, SYSTEM, SimPlan(n, workers=4, **kw))
    assert one == four


def test_fixed_budgets_are_respected():
    budgets = {"yyy": 123_456, "ooo": 1000}
    ledger = simulate_counts(FIELD_SOURCE, SYSTEM, SimPlan(1, mode="fixed", budgets=budgets))
    assert ledger.n("yyy") == 123_456
    assert ledger.n("ooo") == 1000
    assert ledger.n("zzz") == 0


@pytest.mark.parametrize("kw", [
    dict(n_pulses=0),
    dict(n_pulses=10, mode="weird"),
    dict(n_pulses=10, engine="fast"),
    dict(n_pulses=10, mode="fixed"),
    dict(n_pulses=10, mode="fixed", budgets={"zzx": 3}),
])
def test_plan_validation(kw):
    with pytest.raises(ValueError):
        SimPlan(**kw)


def test_hom_scan_origin_and_far_delay():
    system = SystemModel(1.0, 1.0, 1.0, p_d=0.0, e_d=0.0, visibility=0.25)
    mu = 0.05
    points = simulate_hom_scan(mu, system, [(0.0, 0.0), (60.0, 120.0)], 20_000_000, seed=2)
    expected = setting_gain("XXX", (mu,) * 3, system)
    origin = expected.error_gain / expected.gain
    m = points[0].coincidences
    assert _within(points[0].errors, m, origin)
    far = setting_gain("XXX", (mu,) * 3, system, PulseModel.from_delays(60.0, 120.0))
    assert _within(points[1].errors, points[1].coincidences, far.error_gain / far.gain)
    assert points[1].qber_x == pytest.approx(0.5, abs=0.02)
