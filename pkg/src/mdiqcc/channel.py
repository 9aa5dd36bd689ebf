"""Expected-value forward model of the three-user link.

Gains are computed exactly for phase-randomized coherent inputs: detector
clicks are independent given the global phases, so each setting reduces to
per-detector Poisson click probabilities averaged over two phases.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .decoy import key_rate_four_intensity
from .ghz import cross_scale, pattern_sums, phase_grid
from .model import AGGREGATED, COMBOS, CountLedger, GainTable, PulseModel, SourceSpec, SystemModel

__all__ = [
    "PoissonExpansion",
    "single_photon_yield",
    "single_photon_error",
    "state_yields",
    "SettingGain",
    "setting_gain",
    "combo_gain",
    "expected_gains",
    "infinite_decoy_key_rate",
    "schedule",
    "expected_ledger",
]

_BITS = np.array(list(itertools.product((0, 1), repeat=3)))


@dataclass(frozen=True)
class PoissonExpansion:
    """Photon-number distribution of a coherent pulse, truncated at ``n_max``."""

    intensity: float
    coefficients: tuple[float, ...]

    @classmethod
    def of(cls, intensity: float, tail: float = 1e-12) -> "PoissonExpansion":
        if intensity < 0:
            raise ValueError("intensity must be >= 0")
        coeffs = []
        term = math.exp(-intensity)
        total = 0.0
        n = 0
        while True:
            coeffs.append(term)
            total += term
            if 1.0 - total < tail or (intensity == 0.0):
                break
            n += 1
            term = term * intensity / n
        return cls(intensity, tuple(coeffs))

    @property
    def n_max(self) -> int:
        return len(self.coefficients) - 1

    @property
    def tail(self) -> float:
        return max(1.0 - math.fsum(self.coefficients), 0.0)

    def __getitem__(self, n: int) -> float:
        return self.coefficients[n] if n < len(self.coefficients) else 0.0


def state_yields(eta: float, p_d: float) -> tuple[float, float]:
    """Single-photon yields of the HHH/VVV inputs and of the six mixed inputs.

    A mixed input such as HHV needs at least one photon lost and replaced by a
    dark count, hence no ``eta**3`` term.
    """
    q = 1.0 - eta
    pre = (1.0 - p_d) ** 3
    same = pre * (eta**3 + 6 * eta**2 * q * p_d + 12 * eta * q**2 * p_d**2 + 8 * q**3 * p_d**3)
    mixed = pre * (2 * eta**3 * p_d + 4 * eta**2 * q * (p_d + p_d**2)
                   + 12 * eta * q**2 * p_d**2 + 8 * q**3 * p_d**3)
    return same, mixed


def single_photon_yield(system: SystemModel) -> tuple[float, float]:
    """Single-photon yield in the Z and X bases (equal by symmetry).

    Uses the geometric-mean transmittance; exact only for symmetric links.
    """
    eta, p = system.eta_mean, system.p_d
    q = 1.0 - eta
    y = (1.0 - p) ** 3 * (
        0.25 * eta**3 + 1.5 * eta**3 * p + 4.5 * eta**2 * q * p + 3 * eta**2 * q * p**2
        + 12 * eta * q**2 * p**2 + 8 * q**3 * p**3
    )
    return y, y


def single_photon_error(system: SystemModel) -> float:
    eta, p, ed = system.eta_mean, system.p_d, system.e_d
    y, _ = single_photon_yield(system)
    if y <= 0:
        raise ValueError("single-photon yield is zero (no transmission and no dark counts)")
    q = 1.0 - eta
    num = (1.0 - p) ** 3 * (
        ed / 4 * eta**3 + 0.75 * eta**3 * p + 2.25 * eta**2 * q * p + 1.5 * eta**2 * q * p**2
        + 6 * eta * q**2 * p**2 + 4 * q**3 * p**3
    )
    return num / y


@dataclass(frozen=True)
class SettingGain:
    """Gain of one basis/intensity setting, split by event type.

    ``signal`` counts successes where every clicking detector saw light,
    ``dark`` those with at least one dark-only click; all are averaged over
    the eight bit values.  The error gains follow the
    attribution rule: signal events are misread with probability ``e_d``,
    dark-assisted events carry a random bit.
    """

    gain: float
    error_gain: float
    signal: float
    dark: float


def _amplitudes(bases: str, intensities) -> tuple[np.ndarray, np.ndarray]:
    """Real H/V field amplitudes, shape (8, 3), for every bit setting."""
    h = np.zeros((8, 3))
    v = np.zeros((8, 3))
    for u, (basis, m) in enumerate(zip(bases, intensities)):
        bits = _BITS[:, u]
        if basis == "o" or m == 0.0:
            continue
        r = math.sqrt(m)
        if basis == "Z":
            h[:, u] = np.where(bits == 0, r, 0.0)
            v[:, u] = np.where(bits == 1, r, 0.0)
        elif basis == "X":
            h[:, u] = r / math.sqrt(2)
            v[:, u] = np.where(bits == 0, 1.0, -1.0) * r / math.sqrt(2)
        else:
            raise ValueError(f"unknown basis {basis!r}")
    return h, v


def detector_means(bases: str, intensities, system: SystemModel, pulse: PulseModel,
                   theta_b, theta_c, gammas=(0.0, 0.0, 0.0)):
    """Mean photon numbers at the H and V detector of each path.

    ``intensities`` are the pulses leaving the users; transmittance is applied
    here.  ``theta_b``/``theta_c`` are the global phases of Bob and Charlie
    relative to Alice (broadcastable arrays).  Returns arrays of shape
    (3, 8, *phase shape).
    """
    m = [eta * mu for eta, mu in zip(system.etas, intensities)]
    h, v = _amplitudes(bases, m)
    theta_b = np.asarray(theta_b, dtype=float)
    theta_c = np.asarray(theta_c, dtype=float)
    zeros = np.zeros(np.broadcast(theta_b, theta_c).shape)
    theta = (zeros, theta_b + zeros, theta_c + zeros)
    k = cross_scale(system.visibility)
    ov = pulse.overlaps()
    extra = (1,) * zeros.ndim
    n_h, n_v = [], []
    for i in range(3):
        j = (i + 1) % 3
        a = h[:, i].reshape((8,) + extra)
        c = v[:, j].reshape((8,) + extra)
        base = 0.5 * (a * a + c * c)
        cross = k * ov[i] * a * c * np.cos(theta[i] - theta[j] - gammas[i])
        n_h.append(base + cross)
        n_v.append(base - cross)
    return np.stack(n_h), np.stack(n_v)


def setting_gain(bases: str, intensities, system: SystemModel, pulse: PulseModel | None = None,
                 quadrature_points: int = 32) -> SettingGain:
    """Exact phase-averaged gain of one setting (bases like ``"XoX"``)."""
    pulse = pulse or PulseModel()
    nodes, w = phase_grid(quadrature_points)
    lit = sum(1 for b, m in zip(bases, intensities) if b != "o" and m > 0)
    if lit >= 2:
        tb, tc = np.meshgrid(nodes, nodes, indexing="ij")
        weights = np.outer(w, w)
    else:
        # At most one user sends light, so nothing interferes.
        tb, tc = np.zeros((1, 1)), np.zeros((1, 1))
        weights = np.ones((1, 1))
    n_h, n_v = detector_means(bases, intensities, system, pulse, tb, tc)
    pd = system.p_d
    none_h, none_v = (1 - pd) * np.exp(-n_h), (1 - pd) * np.exp(-n_v)
    total, even = pattern_sums(1 - none_h, 1 - none_v, none_h, none_v)
    sig_total, sig_even = pattern_sums(-np.expm1(-n_h), -np.expm1(-n_v), none_h, none_v)
    avg = lambda arr: np.tensordot(arr, weights, axes=((1, 2), (0, 1)))  # noqa: E731
    total, even, sig_total, sig_even = map(avg, (total, even, sig_total, sig_even))
    dark = total - sig_total
    ed = system.e_d
    if "X" in bases:
        parity = _BITS.sum(axis=1) % 2
        sig_odd = sig_total - sig_even
        mismatch = np.where(parity == 0, sig_odd, sig_even)
        match = sig_total - mismatch
        err = mismatch * (1 - ed) + match * ed + 0.5 * dark
    else:
        err = ed * sig_total + 0.5 * dark
    return SettingGain(
        gain=float(total.mean()),
        error_gain=float(err.mean()),
        signal=float(sig_total.mean()),
        dark=float(dark.mean()),
    )


def combo_gain(combo: str, source: SourceSpec, system: SystemModel, pulse: PulseModel | None = None,
               quadrature_points: int = 32) -> SettingGain:
    """Gain of a three-letter source combination (``z``, ``x``, ``y``, ``o``)."""
    bases = "".join({"z": "Z", "x": "X", "y": "X", "o": "o"}[c] for c in combo)
    intensities = [source.intensity(c) for c in combo]
    return setting_gain(bases, intensities, system, pulse, quadrature_points)


def expected_gains(source: SourceSpec, system: SystemModel, pulse: PulseModel | None = None,
                   quadrature_points: int = 32) -> GainTable:
    """Gain table for every ledger combination plus the six permutations.

    Z-basis photon-driven successes always carry equal bits, so the three
    pairwise error gains coincide.
    """
    gains, errs = {}, {}
    singles = [c for c in COMBOS if c not in AGGREGATED]
    for sym, perms in AGGREGATED.items():
        singles += list(perms)
    for combo in singles:
        g = combo_gain(combo, source, system, pulse, quadrature_points)
        gains[combo] = g.gain
        errs[combo] = g.error_gain
    for sym, perms in AGGREGATED.items():
        gains[sym] = sum(gains[p] for p in perms) / 3.0
        errs[sym] = sum(errs[p] for p in perms) / 3.0
    pair = {p: errs["zzz"] for p in ("ab", "ac", "bc")}
    return GainTable(gains, errs, pair)


def infinite_decoy_key_rate(source: SourceSpec, system: SystemModel,
                            pulse: PulseModel | None = None, quadrature_points: int = 32) -> float:
    """Key rate with the exact single-photon yield and phase error."""
    y, _ = single_photon_yield(system)
    if y <= 0:
        return 0.0
    e = single_photon_error(system)
    z = combo_gain("zzz", source, system, pulse, quadrature_points)
    if z.gain <= 0:
        return 0.0
    e_pair = z.error_gain / z.gain
    return key_rate_four_intensity(y, e, z.gain, (e_pair,) * 3, source, f=system.f)



def schedule(source: SourceSpec, n_pulses: float) -> dict[str, float]:
    """Pulses per ledger row under i.i.d. source selection by every user."""
    out = {}
    for combo in COMBOS:
        perms = AGGREGATED.get(combo, (combo,))
        out[combo] = sum(
            n_pulses * math.prod(source.probability(c) for c in p) for p in perms
        )
    return out


def expected_ledger(source: SourceSpec, system: SystemModel, n_pulses: float,
                    pulse: PulseModel | None = None, gains: GainTable | None = None,
                    pulses: dict[str, float] | None = None) -> CountLedger:
    """Expected-value ledger (float counts) for a pulse budget.

    ``pulses`` overrides the i.i.d. schedule with fixed per-row budgets.
    """
    gains = gains or expected_gains(source, system, pulse)
    pulses = dict(pulses) if pulses is not None else schedule(source, n_pulses)
    coinc = {c: pulses[c] * gains[c] for c in COMBOS}
    errors = {("zzz", p): pulses["zzz"] * gains.pair_error_gains[p] for p in ("ab", "ac", "bc")}
    errors[("xxx", "all")] = pulses["xxx"] * gains.error_gains["xxx"]
    errors[("yyy", "all")] = pulses["yyy"] * gains.error_gains["yyy"]
    return CountLedger(pulses, coinc, errors)
