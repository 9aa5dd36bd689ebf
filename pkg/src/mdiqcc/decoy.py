"""Four-intensity decoy-state estimators on expected (or plug-in) gains.

The single-photon yield bound comes from eliminating the multi-photon
terms between the weak decoy ``x`` and the stronger decoy ``y``; everything
that involves a vacuum slot is collected into the term ``h``.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .model import GainTable, SourceSpec

__all__ = [
    "binary_entropy",
    "h_term",
    "s_plus",
    "s_minus",
    "y111_lower",
    "e111_upper",
    "key_rate_four_intensity",
    "AsymptoticBounds",
    "asymptotic_bounds",
    "asymptotic_key_rate",
]

_ENTROPY_TOL = 1e-12


def binary_entropy(x):
    """Binary entropy in bits, with H(0) = H(1) = 0.

    Arguments within 1e-12 outside [0, 1] are clamped; anything further out
    raises.
    """
    arr = np.asarray(x, dtype=float)
    if np.any((arr < -_ENTROPY_TOL) | (arr > 1 + _ENTROPY_TOL)):
        raise ValueError(f"entropy argument outside [0, 1]: {x!r}")
    p = np.clip(arr, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    h = np.where((p <= 0) | (p >= 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def _folded_entropy(e: float) -> float:
    # Rates only care about error rates up to one half; beyond that the
    # entropy is held at 1 so the rate stays monotone in the error.
    return binary_entropy(min(max(e, 0.0), 0.5))


def _get(gains, combo: str) -> float:
    if isinstance(gains, GainTable):
        return gains.gains[combo] if combo in gains.gains else None
    return gains.get(combo)


def _triple_sum(gains, combos, sym: str) -> float:
    values = [_get(gains, c) for c in combos]
    if all(v is not None for v in values):
        return float(sum(values))
    agg = _get(gains, sym)
    if agg is None:
        raise KeyError(f"gain table lacks {sym} (or its permutations)")
    return 3.0 * float(agg)


def _need(gains, combo):
    v = _get(gains, combo)
    if v is None:
        raise KeyError(f"gain table lacks combination {combo!r}")
    return float(v)


def h_term(gains: GainTable | Mapping[str, float], source: SourceSpec) -> float:
    """Vacuum-containing part of the X-basis decoy gain."""
    a = math.exp(-source.mu_x)
    two = _triple_sum(gains, ("oxx", "xox", "xxo"), "oxx_sym")
    one = _triple_sum(gains, ("xoo", "oxo", "oox"), "xoo_sym")
    return a * two - a * a * one + a**3 * _need(gains, "ooo")


def s_plus(gains, source: SourceSpec) -> float:
    mx, my = source.mu_x, source.mu_y
    side = _need(gains, "oyy") + _need(gains, "yoy") + _need(gains, "yyo")
    return (math.exp(-3 * my) * my**4 * _need(gains, "xxx")
            + math.exp(-3 * mx) * mx**4
            * (math.exp(-3 * my) * _need(gains, "ooo") + math.exp(-my) * side))


def s_minus(gains, source: SourceSpec) -> float:
    mx, my = source.mu_x, source.mu_y
    side = _need(gains, "yoo") + _need(gains, "oyo") + _need(gains, "ooy")
    return math.exp(-3 * mx) * mx**4 * (_need(gains, "yyy") + math.exp(-2 * my) * side)


def y111_lower(s_plus_low: float, s_minus_high: float, h: float, source: SourceSpec) -> float:
    mx, my = source.mu_x, source.mu_y
    if not mx < my:
        raise ValueError("need mu_x < mu_y")
    den = math.exp(-3 * mx - 3 * my) * (mx**3 * my**4 - mx**4 * my**3)
    y = (s_plus_low - s_minus_high - math.exp(-3 * my) * my**4 * h) / den
    return min(max(y, 0.0), 1.0)


def e111_upper(exx_qxx_high: float, h: float, y111_low: float, source: SourceSpec) -> float | None:
    """Upper bound on the single-photon X error rate.

    Half of ``h`` is subtracted because vacuum-driven events are assigned
    random bits.  Returns ``None`` when the yield bound is zero (no key).
    """
    if y111_low <= 0:
        return None
    mx = source.mu_x
    e = (exx_qxx_high - h / 2.0) / (mx**3 * math.exp(-3 * mx) * y111_low)
    return min(max(e, 0.0), 1.0)


def key_rate_four_intensity(y111: float, e111_pz: float, q_z: float, qber_pairs,
                            source: SourceSpec, f: float = 1.16) -> float:
    """Conference key rate per pulse, clamped at zero."""
    mz = source.mu_z
    if y111 <= 0:
        return 0.0
    leak = max(_folded_entropy(e) for e in qber_pairs)
    rate = source.p_z**3 * (
        mz**3 * math.exp(-3 * mz) * y111 * (1.0 - _folded_entropy(e111_pz)) - q_z * f * leak
    )
    return max(rate, 0.0)


class AsymptoticBounds(tuple):
    """``(y111_low, e111_high, h)`` from exact expected gains."""

    __slots__ = ()

    def __new__(cls, y111_low, e111_high, h):
        return super().__new__(cls, (y111_low, e111_high, h))

    y111_low = property(lambda self: self[0])
    e111_high = property(lambda self: self[1])
    h = property(lambda self: self[2])


def asymptotic_bounds(gains: GainTable, source: SourceSpec) -> AsymptoticBounds:
    h = h_term(gains, source)
    y = y111_lower(s_plus(gains, source), s_minus(gains, source), h, source)
    e = e111_upper(gains.error_gains["xxx"], h, y, source)
    return AsymptoticBounds(y, 1.0 if e is None else e, h)


def asymptotic_key_rate(gains: GainTable, source: SourceSpec, f: float = 1.16) -> float:
    """Four-intensity rate with infinitely many pulses (no fluctuations)."""
    y, e, _ = asymptotic_bounds(gains, source)
    q = gains["zzz"]
    pairs = [gains.pair_error_gains[p] / q if q > 0 else 0.0 for p in ("ab", "ac", "bc")]
    return key_rate_four_intensity(y, e, q, pairs, source, f=f)
