"""Chernoff intervals between observed counts and their expectations.

Two directions are needed by the finite-key pipeline:

* observed count -> interval for the expectation (``E^L``, ``E^U``), and
* expected count -> interval for an observation (``O^L``, ``O^U``).

For large counts (``chi >= 6b``) the usual closed-form approximation is used.
Below that threshold the defining equation

    chi - y + chi * ln(y / chi) + b = 0

is solved for its two roots by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ChernoffInterval",
    "chernoff_b",
    "expectation_lower",
    "expectation_upper",
    "observation_lower",
    "observation_upper",
    "chernoff_expectation_bounds",
    "chernoff_observation_bounds",
]

_REL_TOL = 1e-13


@dataclass(frozen=True)
class ChernoffInterval:
    low: float
    high: float
    b: float
    warning: str | None = None

    def __post_init__(self):
        if self.low < 0 or self.low > self.high:
            raise ValueError(f"invalid interval [{self.low!r}, {self.high!r}]")

    def __contains__(self, x) -> bool:
        return self.low <= x <= self.high


def chernoff_b(epsilon: float) -> float:
    """``b = -ln(epsilon / 2)``."""
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    return -math.log(epsilon / 2.0)


def _bisect(g, lo, hi, rel=_REL_TOL, max_iter=400):
    """Root of ``g`` in [lo, hi]; g(lo) and g(hi) must have opposite signs."""
    glo = g(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo <= rel * max(abs(lo), abs(hi), 1e-300):
            break
    return 0.5 * (lo + hi)


def _delta(chi: float, b: float) -> float:
    return (3.0 * b + math.sqrt(8.0 * b * chi + b * b)) / (2.0 * (chi - b))


def _exact_lower(chi: float, b: float) -> float:
    if chi < 1e-200:
        return 0.0
    # Work in s = ln(y/chi); g is concave with g(0) = b > 0.
    g = lambda s: chi * (1.0 - math.exp(s) + s) + b
    lo = -b / chi - 2.0
    while g(lo) > 0.0:
        lo = 2.0 * lo
    return chi * math.exp(_bisect(g, lo, 0.0))


def _exact_upper(chi: float, b: float) -> float:
    if chi == 0.0:
        return b
    g = lambda y: chi - y + chi * math.log(y / chi) + b
    hi = chi + b
    while g(hi) > 0.0:
        hi *= 2.0
    return _bisect(g, chi, hi)


def expectation_lower(chi: float, b: float) -> float:
    if chi < 0:
        raise ValueError(f"count must be >= 0, got {chi!r}")
    if chi == 0:
        return 0.0
    if chi >= 6.0 * b:
        d = _delta(chi, b)
        if d < 1.0:
            return chi / (1.0 + d)
    return _exact_lower(chi, b)


def expectation_upper(chi: float, b: float) -> float:
    if chi < 0:
        raise ValueError(f"count must be >= 0, got {chi!r}")
    if chi == 0:
        return b
    if chi >= 6.0 * b:
        d = _delta(chi, b)
        # d == 1 exactly at chi == 6b, where the approximation diverges.
        if d < 1.0:
            return chi / (1.0 - d)
    return _exact_upper(chi, b)


def _delta_obs(mean: float, b: float) -> float:
    return (b + math.sqrt(b * b + 8.0 * b * mean)) / (2.0 * mean)


def observation_lower(mean: float, b: float) -> float:
    if mean < 0:
        raise ValueError(f"mean must be >= 0, got {mean!r}")
    if mean == 0:
        return 0.0
    return max((1.0 - _delta_obs(mean, b)) * mean, 0.0)


def observation_upper(mean: float, b: float) -> float:
    if mean < 0:
        raise ValueError(f"mean must be >= 0, got {mean!r}")
    if mean == 0:
        return 0.0
    return (1.0 + _delta_obs(mean, b)) * mean


def chernoff_expectation_bounds(chi: float, epsilon: float) -> ChernoffInterval:
    """Interval for the expectation of a count observed as ``chi``."""
    b = chernoff_b(epsilon)
    return ChernoffInterval(expectation_lower(chi, b), expectation_upper(chi, b), b)


def chernoff_observation_bounds(mean: float, epsilon: float) -> ChernoffInterval:
    """Interval for an observation of a count with expectation ``mean``."""
    b = chernoff_b(epsilon)
    warning = "zero mean: interval degenerates to (0, 0)" if mean == 0 else None
    return ChernoffInterval(observation_lower(mean, b), observation_upper(mean, b), b, warning)
