"""Six-detector GHZ-state analyzer driven by weak coherent pulses.

Path 1 combines Alice's H mode with Bob's V mode, path 2 Bob's H with
Charlie's V, and path 3 Charlie's H with Alice's V.  A successful
projection needs exactly one click in each path; an even number of V
clicks heralds Phi+, an odd number Phi-.

Sub-ideal visibility is modeled by shrinking each path's interference term
by ``(4V)**(1/3)``, so the threefold correlation (the product of the three
cross terms) scales linearly with ``V``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import PulseModel

__all__ = [
    "PATTERNS",
    "AnalyzerPhase",
    "ClickProbs",
    "cross_scale",
    "phase_grid",
    "pattern_sums",
    "click_probabilities",
    "projection_probabilities",
    "qber_x",
    "visibility_from_phases",
]

#: The eight valid coincidence patterns: per path, 0 = H detector, 1 = V detector.
#: Parity of the pattern (number of V clicks) picks Phi+ (even) or Phi- (odd).
PATTERNS = tuple(itertools.product((0, 1), repeat=3))

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class AnalyzerPhase:
    """Relative phases picked up at the three polarizing beam splitters."""

    gamma1: float = 0.0
    gamma2: float = 0.0
    gamma3: float = 0.0

    def __post_init__(self):
        for v in (self.gamma1, self.gamma2, self.gamma3):
            if not math.isfinite(v):
                raise ValueError("analyzer phases must be finite")

    @property
    def total(self) -> float:
        return self.gamma1 + self.gamma2 + self.gamma3

    def reduced(self) -> "AnalyzerPhase":
        two_pi = 2 * math.pi
        return AnalyzerPhase(self.gamma1 % two_pi, self.gamma2 % two_pi, self.gamma3 % two_pi)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.gamma1, self.gamma2, self.gamma3)


@dataclass(frozen=True)
class ClickProbs:
    d1h: float
    d1v: float
    d2h: float
    d2v: float
    d3h: float
    d3v: float

    def __post_init__(self):
        for v in self.as_tuple():
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"click probability outside [0, 1]: {v!r}")

    def as_tuple(self):
        return (self.d1h, self.d1v, self.d2h, self.d2v, self.d3h, self.d3v)

    def path(self, i: int) -> tuple[float, float]:
        t = self.as_tuple()
        return t[2 * i], t[2 * i + 1]


def cross_scale(visibility: float) -> float:
    """Per-path factor on the interference term for a (signed) visibility."""
    if abs(visibility) > 0.25 + 1e-15:
        raise ValueError(f"|visibility| must not exceed 0.25, got {visibility!r}")
    return float(np.cbrt(4.0 * visibility))


@lru_cache(maxsize=16)
def phase_grid(points: int = 32):
    """Gauss-Legendre nodes on [0, 2pi] and weights normalized to a mean."""
    if points < 1:
        raise ValueError("need at least one quadrature node")
    x, w = np.polynomial.legendre.leggauss(points)
    nodes = (x + 1.0) * math.pi
    weights = w / 2.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def pattern_sums(click_h, click_v, none_h, none_v):
    """Sum per-path products over the eight valid patterns.

    ``click_*`` / ``none_*`` are arrays of shape (3, ...) with the click and
    no-click probabilities of each path's H and V detector.  Returns
    ``(total, even)`` where ``even`` collects the Phi+ patterns.
    Equivalent to enumerating ``PATTERNS``; the product trick
    prod(a+b) / prod(a-b) avoids the eight-term loop.
    """
    only_h = click_h * none_v
    only_v = click_v * none_h
    plus = np.prod(only_h + only_v, axis=0)
    minus = np.prod(only_h - only_v, axis=0)
    return plus, 0.5 * (plus + minus)


def _check_intensity(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")


def _check_prob(p):
    if p < -_PROB_TOL or p > 1 + _PROB_TOL:
        raise ValueError(f"computed probability {p!r} lies outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def click_probabilities(mu: float, nu: float, kappa: float, pulse: PulseModel | None = None,
                        phi_ab: float = 0.0, phi_bc: float = 0.0, phi_ca: float = 0.0,
                        analyzer_phase: AnalyzerPhase | None = None,
                        visibility: float = 0.25) -> ClickProbs:
    """Low-intensity click probabilities of the six detectors.

    Alice, Bob and Charlie send diagonal pulses of mean photon number
    ``mu``, ``nu`` and ``kappa``.  Each path sees half of two pulses, so
    the detector probability is a quarter of the summed intensity plus or
    minus the interference term.
    """
    for name, v in (("mu", mu), ("nu", nu), ("kappa", kappa)):
        _check_intensity(name, v)
    for v in (phi_ab, phi_bc, phi_ca):
        if not math.isfinite(v):
            raise ValueError("phases must be finite")
    pulse = pulse or PulseModel()
    gam = (analyzer_phase or AnalyzerPhase()).as_tuple()
    k = cross_scale(visibility)
    pairs = ((mu, nu, phi_ab), (nu, kappa, phi_bc), (kappa, mu, phi_ca))
    out = []
    for (a, b, phi), ov, g in zip(pairs, pulse.overlaps(), gam):
        mean = (a + b) / 4.0
        cross = 0.5 * k * math.sqrt(a * b) * ov * math.cos(phi + g)
        out += [_check_prob(mean + cross), _check_prob(mean - cross)]
    return ClickProbs(*out)


def projection_probabilities(mu: float, pulse: PulseModel | None = None,
                             analyzer_phase: AnalyzerPhase | None = None,
                             quadrature_points: int = 32,
                             visibility: float = 0.25) -> tuple[float, float]:
    """Phase-averaged Phi+ / Phi- probabilities in the low-intensity limit.

    Products of the linear click probabilities are averaged over the two
    independent relative phases; the third is fixed by the phases summing
    to zero around the loop.
    """
    _check_intensity("mu", mu)
    pulse = pulse or PulseModel()
    gam = np.array((analyzer_phase or AnalyzerPhase()).as_tuple())
    k = cross_scale(visibility)
    nodes, w = phase_grid(quadrature_points)
    p_ab, p_ca = np.meshgrid(nodes, nodes, indexing="ij")
    p_bc = -(p_ab + p_ca)
    weights = np.outer(w, w)
    ov = np.array(pulse.overlaps())
    mean = mu / 2.0
    cross = np.stack([
        0.5 * k * mu * ov[i] * np.cos(phi + gam[i]) for i, phi in enumerate((p_ab, p_bc, p_ca))
    ])
    ph, pv = mean + cross, mean - cross
    if np.any(ph < -_PROB_TOL) or np.any(ph > 1 + _PROB_TOL):
        raise ValueError("click probability outside [0, 1]; use a smaller mu")
    total = np.prod(ph + pv, axis=0)
    even = 0.5 * (total + np.prod(ph - pv, axis=0))
    p_plus = float(np.sum(weights * even))
    p_minus = float(np.sum(weights * (total - even)))
    return p_plus, p_minus


def qber_x(pulse: PulseModel | None = None, visibility: float = 0.25) -> float:
    """X-basis error rate of the GHZ-HOM measurement.

    A signed visibility (as produced by ``visibility_from_phases``) with
    magnitude up to 0.25 is accepted. Detunings reduce the overlap in the
    same way as delays.
    """
    if not math.isfinite(visibility) or abs(visibility) > 0.25:
        raise ValueError(f"visibility must satisfy |V| <= 0.25, got {visibility!r}")
    ov = math.prod((pulse or PulseModel()).overlaps())
    return 0.5 * (1.0 - visibility * ov)


def visibility_from_phases(analyzer_phase: AnalyzerPhase) -> float:
    return 0.25 * math.cos(analyzer_phase.total)
