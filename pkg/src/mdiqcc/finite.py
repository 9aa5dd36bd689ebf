"""Finite-size analysis: from a count ledger to a secure conference key rate.

The pipeline turns observed counts into expectation intervals, bounds the
two decoy sums by small linear programs over jointly constrained gains,
brackets the vacuum term, scans it, and converts the resulting
single-photon bounds back to real values in the key-generating basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .chernoff import (
    chernoff_b,
    expectation_lower,
    expectation_upper,
    observation_lower,
    observation_upper,
)
from .decoy import binary_entropy, key_rate_four_intensity
from .model import CountLedger, DecoyEstimate, KeyRateReport, LedgerError, SourceSpec
from .simplex import InfeasibleError, solve_lp

__all__ = [
    "SPLUS_VARIABLES",
    "SMINUS_VARIABLES",
    "LpProblem",
    "InfeasibleLedger",
    "build_splus_problem",
    "build_sminus_problem",
    "splus_min",
    "sminus_max",
    "h_range",
    "FiniteKeyAnalysis",
    "finite_key_rate",
]

SPLUS_VARIABLES = ("xxx", "ooo", "oyy", "yoy", "yyo")
SMINUS_VARIABLES = ("yyy", "yoo", "oyo", "ooy")


class InfeasibleLedger(ValueError):
    """The joint constraints admit no gains; the ledger is inconsistent."""


def splus_coefficients(source: SourceSpec) -> np.ndarray:
    mx, my = source.mu_x, source.mu_y
    head = math.exp(-3 * mx) * mx**4
    return np.array([
        math.exp(-3 * my) * my**4,
        head * math.exp(-3 * my),
        head * math.exp(-my),
        head * math.exp(-my),
        head * math.exp(-my),
    ])


def sminus_coefficients(source: SourceSpec) -> np.ndarray:
    mx, my = source.mu_x, source.mu_y
    head = math.exp(-3 * mx) * mx**4
    side = head * math.exp(-2 * my)
    return np.array([head, side, side, side])


@dataclass(frozen=True)
class LpProblem:
    """Linear program over expected counts ``t_c = N_c <Q_c>``.

    ``subsets`` lists the index sets whose summed expected counts are bounded
    by ``rhs`` (from below when minimizing, from above when maximizing).
    ``lower``/``upper`` are the per-variable Chernoff bounds.
    """

    variables: tuple[str, ...]
    gain_coefficients: np.ndarray
    pulses: np.ndarray
    subsets: tuple[tuple[int, ...], ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str

    def __post_init__(self):
        if np.any(self.gain_coefficients <= 0):
            raise ValueError("objective coefficients must be positive")
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")

    @property
    def objective(self) -> np.ndarray:
        """Coefficients on the count variables (gain coefficient / N)."""
        return self.gain_coefficients / self.pulses

    def value(self, counts) -> float:
        return float(self.objective @ np.asarray(counts, dtype=float))

    def solve(self) -> float:
        n = len(self.variables)
        A = np.zeros((len(self.subsets), n))
        for r, s in enumerate(self.subsets):
            A[r, list(s)] = 1.0
        eye = np.eye(n)
        try:
            if self.sense == "min":
                res = solve_lp(
                    self.objective,
                    A_ub=eye, b_ub=self.upper,
                    A_lb=np.vstack([A, eye]), b_lb=np.concatenate([self.rhs, self.lower]),
                )
                return res.fun
            res = solve_lp(
                -self.objective,
                A_ub=np.vstack([A, eye]), b_ub=np.concatenate([self.rhs, self.upper]),
                A_lb=eye, b_lb=self.lower,
            )
            return -res.fun
        except InfeasibleError:
            raise InfeasibleLedger(
                f"joint constraints on {','.join(self.variables)} are infeasible"
            ) from None


def _subsets(n: int, min_size: int):
    return tuple(
        s for k in range(min_size, n + 1) for s in itertools.combinations(range(n), k)
    )


def _pulses(ledger: CountLedger, names) -> np.ndarray:
    n = np.array([ledger.n(c) for c in names], dtype=float)
    if np.any(n <= 0):
        missing = [c for c, v in zip(names, n) if v <= 0]
        raise LedgerError(f"no pulses recorded for {','.join(missing)}")
    return n


def _build(ledger, names, coeffs, b, sense, min_size):
    counts = np.array([ledger.m(c) for c in names], dtype=float)
    subsets = _subsets(len(names), min_size)
    bound = expectation_lower if sense == "min" else expectation_upper
    rhs = np.array([bound(float(counts[list(s)].sum()), b) for s in subsets])
    lower = np.array([expectation_lower(float(c), b) for c in counts])
    upper = np.array([expectation_upper(float(c), b) for c in counts])
    return LpProblem(
        variables=tuple(names),
        gain_coefficients=coeffs,
        pulses=_pulses(ledger, names),
        subsets=subsets,
        rhs=rhs,
        lower=lower,
        upper=upper,
        sense=sense,
    )


def build_splus_problem(ledger: CountLedger, source: SourceSpec, epsilon: float) -> LpProblem:
    """26 joint lower-bound rows (subset sizes 2..5) plus per-variable bounds."""
    return _build(ledger, SPLUS_VARIABLES, splus_coefficients(source), chernoff_b(epsilon), "min", 2)


def build_sminus_problem(ledger: CountLedger, source: SourceSpec, epsilon: float) -> LpProblem:
    """11 joint upper-bound rows (subset sizes 2..4) plus per-variable bounds."""
    return _build(ledger, SMINUS_VARIABLES, sminus_coefficients(source), chernoff_b(epsilon), "max", 2)


def splus_min(ledger: CountLedger, source: SourceSpec, epsilon: float) -> float:
    return build_splus_problem(ledger, source, epsilon).solve()


def sminus_max(ledger: CountLedger, source: SourceSpec, epsilon: float) -> float:
    return build_sminus_problem(ledger, source, epsilon).solve()


def h_range(ledger: CountLedger, source: SourceSpec, epsilon: float) -> tuple[float, float]:
    """Interval for the vacuum-containing X-basis term.

    Aggregated rows carry the pulses of all three permutations; each
    permutation is assumed to have received a third of them.
    """
    b = chernoff_b(epsilon)
    mx = source.mu_x
    n_two = _pulses(ledger, ["oxx_sym"])[0] / 3.0
    n_one = _pulses(ledger, ["xoo_sym"])[0] / 3.0
    n_zero = _pulses(ledger, ["ooo"])[0]
    m_two, m_one, m_zero = ledger.m("oxx_sym"), ledger.m("xoo_sym"), ledger.m("ooo")
    a1, a2, a3 = math.exp(-mx), math.exp(-2 * mx), math.exp(-3 * mx)
    low = (a1 * expectation_lower(m_two, b) / n_two
           - a2 * expectation_upper(m_one, b) / n_one
           + a3 * expectation_lower(m_zero, b) / n_zero)
    high = (a1 * expectation_upper(m_two, b) / n_two
            - a2 * expectation_lower(m_one, b) / n_one
            + a3 * expectation_upper(m_zero, b) / n_zero)
    return max(low, 0.0), high


@dataclass(frozen=True)
class _Point:
    rate: float
    y_exp: float
    e_exp: float
    y_real: float
    e_real: float


class FiniteKeyAnalysis:
    """Ledger-derived quantities that do not depend on the scanned h.

    Keeping them on an object lets the optimizer and the tests evaluate
    ``R(h)`` directly.
    """

    def __init__(self, ledger: CountLedger, source: SourceSpec, *, f: float = 1.16,
                 epsilon: float = 1e-10):
        self.ledger = ledger
        self.source = source
        self.f = f
        self.epsilon = epsilon
        self.b = b = chernoff_b(epsilon)
        self.splus_problem = build_splus_problem(ledger, source, epsilon)
        self.sminus_problem = build_sminus_problem(ledger, source, epsilon)
        self.s_plus = self.splus_problem.solve()
        self.s_minus = self.sminus_problem.solve()
        self.h_low, self.h_high = h_range(ledger, source, epsilon)

        mx, my, mz = source.mu_x, source.mu_y, source.mu_z
        self._den_y = math.exp(-3 * mx - 3 * my) * (mx**3 * my**4 - mx**4 * my**3)
        self._h_coef = math.exp(-3 * my) * my**4
        self._e_coef = mx**3 * math.exp(-3 * mx)
        self.exx_high = expectation_upper(ledger.error("xxx"), b) / _pulses(ledger, ["xxx"])[0]
        n_z = _pulses(ledger, ["zzz"])[0]
        self.k_z = n_z * mz**3 * math.exp(-3 * mz)
        m_z = ledger.m("zzz")
        self.q_z = m_z / n_z
        self.qber_pairs = tuple(
            (ledger.error("zzz", p) / m_z) if m_z > 0 else 0.0 for p in ("ab", "ac", "bc")
        )
        m_x = ledger.m("xxx")
        self.qber_x = ledger.error("xxx") / m_x if m_x > 0 else 0.0

    @property
    def chernoff_applications(self) -> int:
        # joint rows + per-variable pairs for both programs, six for the
        # vacuum term, one for the X errors and two for the real-value step
        n_sp = len(self.splus_problem.subsets) + 2 * len(SPLUS_VARIABLES)
        n_sm = len(self.sminus_problem.subsets) + 2 * len(SMINUS_VARIABLES)
        return n_sp + n_sm + 6 + 1 + 2

    def y111_expected(self, h: float) -> float:
        y = (self.s_plus - self.s_minus - self._h_coef * h) / self._den_y
        return min(max(y, 0.0), 1.0)

    def evaluate(self, h: float) -> _Point:
        y = self.y111_expected(h)
        if y <= 0.0:
            return _Point(0.0, 0.0, 1.0, 0.0, 1.0)
        e = (self.exx_high - h / 2.0) / (self._e_coef * y)
        e = min(max(e, 0.0), 1.0)
        k = self.k_z
        y_real = observation_lower(k * y, self.b) / k
        if y_real <= 0.0:
            return _Point(0.0, y, e, 0.0, 1.0)
        e_real = min(observation_upper(k * y_real * e, self.b) / (k * y_real), 1.0)
        rate = key_rate_four_intensity(
            y_real, e_real, self.q_z, self.qber_pairs, self.source, f=self.f
        )
        return _Point(rate, y, e, y_real, e_real)

    def rate(self, h: float) -> float:
        return self.evaluate(h).rate

    def margin(self, h: float) -> float:
        """Key-rate expression at ``h`` without any clamping.

        Equals ``rate(h)`` wherever that is positive; below zero it keeps
        decreasing with the shortfall, which gives a search something to
        climb when no parameters nearby produce key.
        """
        src = self.source
        mz = src.mu_z
        y = min((self.s_plus - self.s_minus - self._h_coef * h) / self._den_y, 1.0)
        leak = max(binary_entropy(min(max(q, 0.0), 0.5)) for q in self.qber_pairs)
        gain = mz**3 * math.exp(-3 * mz)
        if y <= 0.0:
            useful = y * gain
        else:
            e = min(max((self.exx_high - h / 2.0) / (self._e_coef * y), 0.0), 1.0)
            k = self.k_z
            m = k * y
            y_real = (m - 0.5 * (self.b + math.sqrt(self.b**2 + 8 * self.b * m))) / k
            if y_real <= 0.0:
                useful = y_real * gain
            else:
                e_real = min(observation_upper(k * y_real * e, self.b) / (k * y_real), 1.0)
                useful = gain * y_real * (1.0 - binary_entropy(min(e_real, 0.5)))
        return src.p_z**3 * (useful - self.q_z * self.f * leak)

    def scan(self, points: int = 64, refine: bool = True) -> tuple[float, float]:
        """Minimize R(h) over [h_low, h_high]; returns (rate, h_argmin)."""
        if self.h_low > self.h_high:
            raise InfeasibleLedger(f"empty vacuum-term interval [{self.h_low}, {self.h_high}]")
        grid = np.linspace(self.h_low, self.h_high, int(points))
        rates = np.array([self.rate(h) for h in grid])
        i = int(np.argmin(rates))
        best_r, best_h = float(rates[i]), float(grid[i])
        if refine and points > 2 and self.h_high > self.h_low:
            lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
            res = minimize_scalar(self.rate, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-6 * (hi - lo)})
            if res.fun < best_r:
                best_r, best_h = float(res.fun), float(res.x)
        return best_r, best_h


def finite_key_rate(ledger: CountLedger, source: SourceSpec, *, f: float = 1.16,
                    epsilon: float = 1e-10, h_scan_points: int = 64,
                    rep_rate: float = 2.5e8, refine: bool = True) -> KeyRateReport:
    """Single-scanning finite-key rate of a four-intensity ledger."""
    ana = FiniteKeyAnalysis(ledger, source, f=f, epsilon=epsilon)
    rate, h_star = ana.scan(h_scan_points, refine=refine)
    point = ana.evaluate(h_star)
    reason = None
    if point.y_exp <= 0.0:
        reason = "single-photon yield bound is zero across the vacuum-term interval"
    elif rate <= 0.0:
        reason = "privacy amplification cost exceeds the error-correction budget"
    decoy = DecoyEstimate(
        h_low=ana.h_low,
        h_high=ana.h_high,
        s_plus_low=ana.s_plus,
        s_minus_high=ana.s_minus,
        y111_exp_low=point.y_exp,
        e111_exp_high=point.e_exp,
        y111_real_low=point.y_real,
        e111_real_high=point.e_real,
    )
    ab, ac, bc = ana.qber_pairs
    return KeyRateReport(
        rate_per_pulse=rate,
        rate_per_second=rate * rep_rate,
        qber_z_ab=ab,
        qber_z_ac=ac,
        qber_z_bc=bc,
        qber_x=ana.qber_x,
        decoy=decoy,
        h_argmin=h_star,
        epsilon=epsilon,
        chernoff_applications=ana.chernoff_applications,
        reason=reason,
        extras={"q_z": ana.q_z, "exx_q_high": ana.exx_high, "h_scan_points": int(h_scan_points)},
    )
