"""Event-level Monte-Carlo generation of count ledgers.

Detector clicks of phase-randomized coherent pulses are independent once
the global phases are fixed, so a pulse triple can be simulated from the
per-detector click probabilities alone.  Two facts keep large runs cheap:

* the chance that a path sees at least one click does not depend on the
  phases (the two output modes always share ``|E_H|^2 + |E_V|^2``), so the
  number of pulses in which every path fires is a single binomial draw;
* only those candidates need phases and per-detector outcomes.

Work is split into fixed blocks, each with a random stream derived from
``(seed, block)``; results therefore do not depend on the worker count.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .channel import _amplitudes, expected_gains, schedule
from .ghz import cross_scale
from .model import AGGREGATED, COMBOS, CountLedger, PulseModel, SourceSpec, SystemModel

__all__ = ["SimPlan", "simulate_counts", "simulate_hom_scan", "HomScanPoint"]

_TOKENS = "zxyo"
_BASIS = {"z": "Z", "x": "X", "y": "X", "o": "o"}
_ROW_OF = {}
for _row in COMBOS:
    for _p in AGGREGATED.get(_row, (_row,)):
        _ROW_OF[_p] = _row
_ROW_INDEX = {r: i for i, r in enumerate(COMBOS)}
_BITS = np.array(list(itertools.product((0, 1), repeat=3)))


@dataclass(frozen=True)
class SimPlan:
    """How many pulses to simulate and how to spread them.

    ``mode="proportional"`` draws every user's source i.i.d. from the source
    probabilities; ``mode="fixed"`` sends exactly ``budgets[row]`` pulses per
    ledger row (aggregated rows are split evenly over their permutations).
    ``engine="exact"`` samples detector events; ``engine="binomial"`` draws
    ledger counts directly around the expected gains, which is much faster
    and adequate for statistics of the finite-key bounds.
    """

    n_pulses: int
    seed: int = 0
    mode: str = "proportional"
    budgets: Mapping[str, int] | None = None
    engine: str = "exact"
    block_size: int = 1 << 24
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("proportional", "fixed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.engine not in ("exact", "binomial"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.mode == "fixed":
            if not self.budgets:
                raise ValueError("fixed mode needs per-row budgets")
            unknown = set(self.budgets) - set(COMBOS)
            if unknown:
                raise ValueError(f"unknown ledger rows in budgets: {sorted(unknown)}")
            if any(int(v) != v or v < 0 for v in self.budgets.values()):
                raise ValueError("budgets must be non-negative integers")
            object.__setattr__(self, "n_pulses", int(sum(self.budgets.values())))
        if int(self.n_pulses) != self.n_pulses or self.n_pulses <= 0:
            raise ValueError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        if self.block_size <= 0 or self.workers <= 0:
            raise ValueError("block_size and workers must be positive")


@dataclass
class _Cells:
    """Settings (permutation x bits) that feed the ledger."""

    row: np.ndarray          # ledger row index per cell
    bits: np.ndarray         # (cells, 3)
    h: np.ndarray            # (cells, 3) received H amplitudes
    v: np.ndarray            # (cells, 3) received V amplitudes
    x_basis: np.ndarray      # bool per cell
    perm: list = field(default_factory=list)


def _cells(source: SourceSpec, system: SystemModel, perms) -> _Cells:
    rows, bits, hs, vs, xb = [], [], [], [], []
    for p in perms:
        bases = "".join(_BASIS[c] for c in p)
        m = [eta * source.intensity(c) for eta, c in zip(system.etas, p)]
        h, v = _amplitudes(bases, m)
        rows += [_ROW_INDEX[_ROW_OF[p]]] * 8
        bits.append(_BITS)
        hs.append(h)
        vs.append(v)
        xb += ["X" in bases] * 8
    return _Cells(np.array(rows), np.vstack(bits), np.vstack(hs), np.vstack(vs),
                  np.array(xb), list(perms))


class _Tally:
    def __init__(self):
        self.n = np.zeros(len(COMBOS), dtype=np.int64)
        self.m = np.zeros(len(COMBOS), dtype=np.int64)
        self.e_all = np.zeros(len(COMBOS), dtype=np.int64)
        self.e_pair = np.zeros(3, dtype=np.int64)

    def add(self, other: "_Tally"):
        self.n += other.n
        self.m += other.m
        self.e_all += other.e_all
        self.e_pair += other.e_pair


def _events(cells: _Cells, counts: np.ndarray, system: SystemModel, pulse: PulseModel,
            rng: np.random.Generator) -> _Tally:
    """Simulate ``counts[i]`` pulses of every cell and tally the outcomes."""
    tally = _Tally()
    np.add.at(tally.n, cells.row, counts)
    pd = system.p_d
    a = cells.h                         # path i: H of user i ...
    c = np.roll(cells.v, -1, axis=1)    # ... and V of user i+1
    light = a * a + c * c
    p_path = 1.0 - (1.0 - pd) ** 2 * np.exp(-light)
    k = rng.binomial(counts, np.prod(p_path, axis=1))
    total = int(k.sum())
    if total == 0:
        return tally
    idx = np.repeat(np.arange(len(counts)), k)
    theta = np.zeros((total, 3))
    theta[:, 1:] = rng.uniform(0.0, 2.0 * math.pi, size=(total, 2))
    scale = cross_scale(system.visibility) * np.asarray(pulse.overlaps())
    ai, ci = a[idx], c[idx]
    cross = scale * ai * ci * np.cos(theta - np.roll(theta, -1, axis=1))
    n_h = 0.5 * (ai * ai + ci * ci) + cross
    n_v = 0.5 * (ai * ai + ci * ci) - cross
    ph_h, ph_v = -np.expm1(-n_h), -np.expm1(-n_v)
    click_h = 1.0 - (1.0 - ph_h) * (1.0 - pd)
    click_v = 1.0 - (1.0 - ph_v) * (1.0 - pd)
    only_h = click_h * (1.0 - click_v)
    only_v = (1.0 - click_h) * click_v
    norm = 1.0 - (1.0 - click_h) * (1.0 - click_v)
    u = rng.random((total, 3, 2))
    r = u[..., 0] * norm
    is_h = r < only_h
    is_v = (~is_h) & (r < only_h + only_v)
    single = is_h | is_v
    valid = single.all(axis=1)
    # Was the clicking detector lit, or was it a dark count?
    lit = np.where(is_h, u[..., 1] * click_h < ph_h, u[..., 1] * click_v < ph_v)
    signal = lit.all(axis=1)
    outcome_odd = is_v.sum(axis=1) % 2 == 1

    err_u = rng.random((total, 3))
    if not valid.any():
        return tally
    cell_v = idx[valid]
    np.add.at(tally.m, cells.row[cell_v], 1)
    sig_v = signal[valid]
    eu = err_u[valid]
    bits = cells.bits[cell_v]
    xmask = cells.x_basis[cell_v]
    if xmask.any():
        input_odd = bits[xmask].sum(axis=1) % 2 == 1
        wrong = outcome_odd[valid][xmask] != input_odd
        flip = eu[xmask, 0] < system.e_d
        err = np.where(sig_v[xmask], wrong ^ flip, eu[xmask, 0] < 0.5)
        np.add.at(tally.e_all, cells.row[cell_v][xmask], err.astype(np.int64))
    zmask = ~xmask & (cells.row[cell_v] == _ROW_INDEX["zzz"])
    if zmask.any():
        bz = bits[zmask]
        for j, (s, t) in enumerate(((0, 1), (0, 2), (1, 2))):
            differ = bz[:, s] != bz[:, t]
            flip = eu[zmask, j] < system.e_d
            err = np.where(sig_v[zmask], differ ^ flip, eu[zmask, j] < 0.5)
            tally.e_pair[j] += int(err.sum())
    return tally


def _block_sizes(total: int, block: int):
    full, rest = divmod(int(total), int(block))
    return [block] * full + ([rest] if rest else [])


def _rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *path]))


def _all_perms():
    return [p for p in (''.join(t) for t in itertools.product(_TOKENS, repeat=3)) if p in _ROW_OF]


def _ledger(tally: _Tally) -> CountLedger:
    pulses = {r: float(tally.n[i]) for i, r in enumerate(COMBOS)}
    coinc = {r: int(tally.m[i]) for i, r in enumerate(COMBOS)}
    errors = {("zzz", p): int(tally.e_pair[j]) for j, p in enumerate(("ab", "ac", "bc"))}
    errors[("xxx", "all")] = int(tally.e_all[_ROW_INDEX["xxx"]])
    errors[("yyy", "all")] = int(tally.e_all[_ROW_INDEX["yyy"]])
    return CountLedger(pulses, coinc, errors)


def _exact(source, system, plan, pulse):
    perms = _all_perms()
    cells = _cells(source, system, perms)
    jobs = []
    if plan.mode == "proportional":
        # Every user independently picks a source; triples that do not feed a
        # ledger row are drawn (so the counts are right) and then dropped.
        triples = [''.join(t) for t in itertools.product(_TOKENS, repeat=3)]
        probs = np.array([math.prod(source.probability(ch) for ch in t) for t in triples])
        probs = probs / probs.sum()
        keep = np.array([triples.index(p) for p in perms])
        for b, size in enumerate(_block_sizes(plan.n_pulses, plan.block_size)):
            jobs.append(("prop", b, size, probs, keep))
    else:
        for r_i, row in enumerate(COMBOS):
            budget = int(plan.budgets.get(row, 0))
            if budget == 0:
                continue
            row_perms = AGGREGATED.get(row, (row,))
            for b, size in enumerate(_block_sizes(budget, plan.block_size)):
                jobs.append(("fixed", (r_i, b), size, row_perms, None))

    cell_of_perm = {p: i * 8 for i, p in enumerate(perms)}

    def run(job):
        kind, key, size, a, b = job
        rng = _rng(plan.seed, *((0, key) if kind == "prop" else (1, *key)))
        counts = np.zeros(len(cells.row), dtype=np.int64)
        if kind == "prop":
            per_triple = rng.multinomial(size, a)[b]
            for i, n in enumerate(per_triple):
                counts[i * 8:(i + 1) * 8] = rng.multinomial(n, [1 / 8] * 8)
        else:
            split = rng.multinomial(size, [1 / len(a)] * len(a))
            for p, n in zip(a, split):
                start = cell_of_perm[p]
                counts[start:start + 8] = rng.multinomial(n, [1 / 8] * 8)
        return _events(cells, counts, system, pulse, rng)

    if plan.workers > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    total = _Tally()
    for part in parts:
        total.add(part)
    return total


def _binomial(source, system, plan, pulse):
    gains = expected_gains(source, system, pulse)
    rng = _rng(plan.seed, 2)
    tally = _Tally()
    if plan.mode == "proportional":
        expected = schedule(source, 1.0)
        probs = np.array([expected[r] for r in COMBOS] + [1.0 - sum(expected.values())])
        tally.n[:] = rng.multinomial(plan.n_pulses, np.clip(probs, 0, None) / probs.sum())[:-1]
    else:
        tally.n[:] = [int(plan.budgets.get(r, 0)) for r in COMBOS]
    for i, r in enumerate(COMBOS):
        q = gains[r]
        tally.m[i] = rng.binomial(tally.n[i], min(q, 1.0))
        if r in ("xxx", "yyy") and q > 0:
            tally.e_all[i] = rng.binomial(tally.m[i], gains.error_gains[r] / q)
        if r == "zzz" and q > 0:
            for j, p in enumerate(("ab", "ac", "bc")):
                tally.e_pair[j] = rng.binomial(tally.m[i], gains.pair_error_gains[p] / q)
    return tally


def simulate_counts(source: SourceSpec, system: SystemModel, plan: SimPlan,
                    pulse: PulseModel | None = None) -> CountLedger:
    """Synthetic ledger for ``plan``; identical inputs and seed give identical output."""
    pulse = pulse or PulseModel()
    if plan.engine == "binomial":
        return _ledger(_binomial(source, system, plan, pulse))
    return _ledger(_exact(source, system, plan, pulse))


@dataclass(frozen=True)
class HomScanPoint:
    dt_b: float
    dt_c: float
    coincidences: int
    errors: int

    @property
    def qber_x(self) -> float | None:
        """``None`` when no coincidence was recorded."""
        return self.errors / self.coincidences if self.coincidences else None


def simulate_hom_scan(mu: float, system: SystemModel, grid, n_per_point: int, seed: int = 0,
                      gamma: float = 1.0, workers: int = 1) -> list[HomScanPoint]:
    """X-basis error rate while scanning Bob's and Charlie's delays."""
    src = SourceSpec(mu_z=mu, mu_x=0.0, mu_y=mu, p_z=0.0, p_x=0.0, p_y=1.0, p_o=0.0)
    out = []
    for i, (dt_b, dt_c) in enumerate(grid):
        pulse = PulseModel.from_delays(dt_b, dt_c, gamma)
        plan = SimPlan(n_per_point, seed=seed + i, mode="fixed", budgets={"yyy": n_per_point},
                       workers=workers)
        ledger = simulate_counts(src, system, plan, pulse)
        out.append(HomScanPoint(float(dt_b), float(dt_c), int(ledger.m("yyy")),
                                int(ledger.error("yyy"))))
    return out
