"""Three-intensity baseline: signal ``mu``, decoy ``nu`` and vacuum.

Every user picks ``mu`` with probability ``p_mu``, ``nu`` with ``p_nu`` and
vacuum otherwise; non-vacuum pulses are then encoded in Z with probability
``p_z_mu`` / ``p_z_nu`` and in X otherwise.  Only all-``mu`` Z rounds form
key.

The single-photon bounds use the same elimination as the four-intensity
analysis with (weak, strong) = (``nu``, ``mu``): the Z-basis decoy data bound
the yield, the X-basis decoy data bound the phase error.  Each basis gets
its own ledger so the finite-key machinery can be reused as is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import setting_gain
from .chernoff import observation_upper
from .decoy import _folded_entropy
from .finite import FiniteKeyAnalysis, InfeasibleLedger
from .model import AGGREGATED, COMBOS, ConfigError, CountLedger, LedgerError, SourceSpec, SystemModel

__all__ = [
    "ThreeIntensityParams",
    "DEFAULT_THREE_START",
    "INVALID_SCORE",
    "ThreeIntensityLedgers",
    "three_intensity_ledgers",
    "key_rate_three_intensity",
    "three_intensity_margin",
    "three_intensity_score",
    "three_intensity_rate",
]


#: Objective value for parameters that cannot be evaluated at all.
INVALID_SCORE = -1e12


@dataclass(frozen=True)
class ThreeIntensityParams:
    mu: float
    nu: float
    p_mu: float
    p_nu: float
    p_z_mu: float
    p_z_nu: float

    def __post_init__(self):
        if not (0.0 < self.nu < self.mu):
            raise ConfigError(f"need 0 < nu < mu (nu={self.nu!r}, mu={self.mu!r})")
        for name in ("p_mu", "p_nu", "p_z_mu", "p_z_nu"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {v!r}")
        if self.p_mu + self.p_nu >= 1.0:
            raise ConfigError("p_mu + p_nu must be < 1 (vacuum needs some probability)")

    @property
    def p_o(self) -> float:
        return 1.0 - self.p_mu - self.p_nu

    def choice(self, token: str, basis: str) -> float:
        """Probability that a user sends ``token`` ("y" = mu, "x" = nu, "o") in ``basis``."""
        if token == "o":
            return self.p_o
        p, pz = (self.p_mu, self.p_z_mu) if token == "y" else (self.p_nu, self.p_z_nu)
        return p * (pz if basis == "Z" else 1.0 - pz)

    def key_source(self) -> SourceSpec:
        """Four-intensity view used to drive the shared estimators.

        ``mu_z`` is the key intensity, (``mu_x``, ``mu_y``) the decoy pair, and
        ``p_z`` the probability of a key-generating choice.
        """
        pz = self.p_mu * self.p_z_mu
        return SourceSpec(mu_z=self.mu, mu_x=self.nu, mu_y=self.mu, p_z=pz,
                          p_x=self.p_nu, p_y=self.p_mu - pz, p_o=self.p_o)


#: Default starting point for the parameter search.
DEFAULT_THREE_START = ThreeIntensityParams(mu=0.3, nu=0.03, p_mu=0.5, p_nu=0.3,
                                         p_z_mu=0.85, p_z_nu=0.3)


@dataclass(frozen=True)
class ThreeIntensityLedgers:
    """Per-basis ledgers; in both, ``zzz`` is the all-``mu`` Z key row."""

    z: CountLedger
    x: CountLedger


def _basis_ledger(params, system, n_pulses, basis, key, pulse, quadrature_points):
    B = basis
    pulses, coinc, errors = {}, {}, {}
    cache = {}

    def gain(combo):
        if combo not in cache:
            bases = "".join("o" if c == "o" else B for c in combo)
            mus = [0.0 if c == "o" else (params.mu if c == "y" else params.nu) for c in combo]
            cache[combo] = setting_gain(bases, mus, system, pulse, quadrature_points)
        return cache[combo]

    for combo in COMBOS:
        if combo == "zzz":
            continue
        perms = AGGREGATED.get(combo, (combo,))
        n_tot, m_tot = 0.0, 0.0
        for p in perms:
            n = n_pulses * math.prod(params.choice(c, B) for c in p)
            n_tot += n
            m_tot += n * gain(p).gain
        pulses[combo], coinc[combo] = n_tot, m_tot
    for combo in ("xxx", "yyy"):
        errors[(combo, "all")] = pulses[combo] * gain(combo).error_gain
    pulses["zzz"], coinc["zzz"] = key["n"], key["m"]
    for p in ("ab", "ac", "bc"):
        errors[("zzz", p)] = key["e"]
    return CountLedger(pulses, coinc, errors)


def three_intensity_ledgers(params: ThreeIntensityParams, system: SystemModel, n_pulses: float,
                            pulse=None, quadrature_points: int = 32) -> ThreeIntensityLedgers:
    """Expected-value ledgers under i.i.d. selection."""
    k = setting_gain("ZZZ", (params.mu,) * 3, system, pulse, quadrature_points)
    n_key = n_pulses * params.choice("y", "Z") ** 3
    key = {"n": n_key, "m": n_key * k.gain, "e": n_key * k.error_gain}
    return ThreeIntensityLedgers(
        z=_basis_ledger(params, system, n_pulses, "Z", key, pulse, quadrature_points),
        x=_basis_ledger(params, system, n_pulses, "X", key, pulse, quadrature_points),
    )


def three_intensity_margin(ledgers: ThreeIntensityLedgers, params: ThreeIntensityParams, *,
                           f: float = 1.16, epsilon: float = 1e-10,
                           h_scan_points: int = 64) -> float:
    """Worst-case key-rate expression over the vacuum-term scan, unclamped.

    Positive values are the key rate; negative values measure how far the
    parameters are from producing key, which is what a search needs when
    the clamped rate is flat at zero.
    """
    src = params.key_source()
    ana_z = FiniteKeyAnalysis(ledgers.z, src, f=f, epsilon=epsilon)
    ana_x = FiniteKeyAnalysis(ledgers.x, src, f=f, epsilon=epsilon)
    lo, hi = ana_x.h_low, ana_x.h_high
    if lo > hi:
        raise InfeasibleLedger("empty vacuum-term interval")
    k, b = ana_z.k_z, ana_z.b
    gain = params.mu**3 * math.exp(-3 * params.mu)
    leak = max(_folded_entropy(q) for q in ana_z.qber_pairs)
    cost = ana_z.q_z * f * leak
    pz3 = src.p_z**3
    if not ana_z._den_y > 0.0:
        raise InfeasibleLedger("decoy intensities give a degenerate yield bound")
    # The yield bound decreases with the vacuum term: take its worst case.
    y = min((ana_z.s_plus - ana_z.s_minus - ana_z._h_coef * ana_z.h_high) / ana_z._den_y, 1.0)
    if y <= 0.0:
        return pz3 * (y * gain - cost)
    m = k * y
    y_real = (m - 0.5 * (b + math.sqrt(b * b + 8 * b * m))) / k
    if y_real <= 0.0:
        return pz3 * (y_real * gain - cost)
    e_coef = params.nu**3 * math.exp(-3 * params.nu)

    def margin(h):
        y_x = ana_x.y111_expected(h)
        if y_x <= 0.0:
            return pz3 * (-cost)
        e = min(max((ana_x.exx_high - h / 2.0) / (e_coef * y_x), 0.0), 1.0)
        e_real = min(observation_upper(k * y_real * e, b) / (k * y_real), 1.0)
        return pz3 * (gain * y_real * (1.0 - _folded_entropy(e_real)) - cost)

    n = max(int(h_scan_points), 2)
    return min(margin(lo + (hi - lo) * i / (n - 1)) for i in range(n))


def key_rate_three_intensity(ledgers: ThreeIntensityLedgers, params: ThreeIntensityParams, *,
                             f: float = 1.16, epsilon: float = 1e-10,
                             h_scan_points: int = 64) -> float:
    """Finite-key rate of the three-intensity protocol from per-basis ledgers."""
    return max(three_intensity_margin(ledgers, params, f=f, epsilon=epsilon,
                                      h_scan_points=h_scan_points), 0.0)


def three_intensity_score(params: ThreeIntensityParams, system: SystemModel, n_pulses: float,
                          epsilon: float = 1e-10, h_scan_points: int = 16) -> float:
    """Search objective: the rate where positive, else a normalized margin.

    Negative margins are divided by the key-round signal scale so that
    switching the source off (which sends the raw margin to zero from
    below) does not look like progress.
    """
    try:
        ledgers = three_intensity_ledgers(params, system, n_pulses)
        m = three_intensity_margin(ledgers, params, f=system.f, epsilon=epsilon,
                                   h_scan_points=h_scan_points)
        if m > 0.0:
            return m
        scale = params.key_source().p_z ** 3 * params.mu**3 * math.exp(-3 * params.mu)
        return m / scale if scale > 0.0 else INVALID_SCORE
    except (LedgerError, InfeasibleLedger, ConfigError, ValueError):
        return INVALID_SCORE


def three_intensity_rate(params: ThreeIntensityParams, system: SystemModel, n_pulses: float,
                         epsilon: float = 1e-10, h_scan_points: int = 64) -> float:
    try:
        ledgers = three_intensity_ledgers(params, system, n_pulses)
        return key_rate_three_intensity(ledgers, params, f=system.f, epsilon=epsilon,
                                        h_scan_points=h_scan_points)
    except (LedgerError, InfeasibleLedger, ConfigError, ValueError):
        return 0.0
