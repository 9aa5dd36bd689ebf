"""Domain types, configuration parsing and count-ledger serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

__all__ = [
    "COMBOS",
    "AGGREGATED",
    "PAIRS",
    "ConfigError",
    "LedgerError",
    "SourceSpec",
    "SystemModel",
    "PulseModel",
    "AnalysisConfig",
    "CountLedger",
    "GainTable",
    "DecoyEstimate",
    "KeyRateReport",
    "load_config",
    "parse_config",
    "load_counts",
    "write_counts",
    "FIELD_SOURCE",
]

#: Ledger rows in canonical order. ``*_sym`` rows aggregate the three
#: permutations of a two-source/one-vacuum (or one-source/two-vacuum) setting.
COMBOS = (
    "zzz", "xxx", "yyy", "ooo", "oxx_sym", "xoo_sym",
    "oyy", "yoy", "yyo", "yoo", "oyo", "ooy",
)
AGGREGATED = {
    "oxx_sym": ("oxx", "xox", "xxo"),
    "xoo_sym": ("xoo", "oxo", "oox"),
}
#: Which error pairs each combination may carry.
PAIRS = {"zzz": ("ab", "ac", "bc"), "xxx": ("all",), "yyy": ("all",)}

_PROB_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid configuration value or malformed configuration file."""


class LedgerError(ValueError):
    """Malformed or inconsistent count ledger."""


def _check_unit(name, value):
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")


def _check_finite(obj):
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{f.name} must be finite, got {value!r}")


@dataclass(frozen=True)
class SourceSpec:
    """Four-intensity source: mean photon numbers and selection probabilities."""

    mu_z: float
    mu_x: float
    mu_y: float
    p_z: float
    p_x: float
    p_y: float
    p_o: float
    mu_o: float = 0.0

    def __post_init__(self):
        _check_finite(self)
        if self.mu_o != 0.0:
            raise ConfigError(f"mu_o must be 0, got {self.mu_o!r}")
        if not self.mu_z > 0.0:
            raise ConfigError(f"mu_z must be > 0, got {self.mu_z!r}")
        if self.mu_x < 0.0:
            raise ConfigError(f"mu_x must be >= 0, got {self.mu_x!r}")
        if not self.mu_x < self.mu_y:
            raise ConfigError(
                f"mu_x < mu_y violated (mu_x={self.mu_x!r}, mu_y={self.mu_y!r})"
            )
        for name in ("p_z", "p_x", "p_y", "p_o"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        total = self.p_z + self.p_x + self.p_y + self.p_o
        if abs(total - 1.0) > _PROB_TOL:
            raise ConfigError(
                f"p_o: selection probabilities p_z+p_x+p_y+p_o sum to {total!r}, expected 1"
            )

    def intensity(self, token: str) -> float:
        return {"z": self.mu_z, "x": self.mu_x, "y": self.mu_y, "o": 0.0}[token]

    def probability(self, token: str) -> float:
        return {"z": self.p_z, "x": self.p_x, "y": self.p_y, "o": self.p_o}[token]


@dataclass(frozen=True)
class SystemModel:
    """Channel and detection parameters.

    ``eta_*`` are end-to-end transmittances per user, detector efficiency
    included. ``visibility`` is the GHZ-HOM visibility (ideal 0.25).
    """

    eta_a: float
    eta_b: float
    eta_c: float
    p_d: float = 1e-6
    e_d: float = 0.0
    visibility: float = 0.25
    f: float = 1.16

    def __post_init__(self):
        _check_finite(self)
        for name in ("eta_a", "eta_b", "eta_c", "p_d", "e_d"):
            _check_unit(name, getattr(self, name))
        if not (0.0 <= self.visibility <= 0.25):
            raise ConfigError(f"visibility must lie in [0, 0.25], got {self.visibility!r}")
        if self.f < 1.0:
            raise ConfigError(f"f must be >= 1, got {self.f!r}")

    @classmethod
    def symmetric(cls, loss_db: float, detector_efficiency: float = 1.0, **kwargs) -> "SystemModel":
        """Equal per-user transmittance from a total loss summed over the three users."""
        eta = detector_efficiency * 10.0 ** (-loss_db / 30.0)
        return cls(eta_a=eta, eta_b=eta, eta_c=eta, **kwargs)

    @property
    def etas(self) -> tuple[float, float, float]:
        return (self.eta_a, self.eta_b, self.eta_c)

    @property
    def eta_mean(self) -> float:
        """Geometric-mean transmittance, used by the symmetric closed forms."""
        return (self.eta_a * self.eta_b * self.eta_c) ** (1.0 / 3.0)


@dataclass(frozen=True)
class PulseModel:
    """Gaussian pulse line shape and relative delays/detunings between users."""

    gamma: float = 1.0
    dt_ab: float = 0.0
    dt_ac: float = 0.0
    dt_bc: float | None = None
    domega_ab: float = 0.0
    domega_bc: float = 0.0
    domega_ca: float = 0.0

    def __post_init__(self):
        if self.dt_bc is None:
            object.__setattr__(self, "dt_bc", self.dt_ac - self.dt_ab)
        _check_finite(self)
        if not self.gamma > 0.0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma!r}")
        if abs(self.dt_bc - (self.dt_ac - self.dt_ab)) > 1e-12:
            raise ConfigError(
                f"dt_bc must equal dt_ac - dt_ab (got dt_bc={self.dt_bc!r}, "
                f"dt_ac - dt_ab={self.dt_ac - self.dt_ab!r})"
            )

    def overlaps(self) -> tuple[float, float, float]:
        """Temporal/spectral overlap factors of the AB, BC and CA interfering paths."""
        g = self.gamma
        return (
            math.exp(-g * self.dt_ab**2 / 2 - self.domega_ab**2 / (8 * g)),
            math.exp(-g * self.dt_bc**2 / 2 - self.domega_bc**2 / (8 * g)),
            math.exp(-g * self.dt_ac**2 / 2 - self.domega_ca**2 / (8 * g)),
        )

    @classmethod
    def from_delays(cls, dt_b: float, dt_c: float, gamma: float = 1.0) -> "PulseModel":
        """Delays of Bob and Charlie relative to Alice, as scanned in a GHZ-HOM experiment."""
        return cls(gamma=gamma, dt_ab=dt_b, dt_ac=dt_c, dt_bc=dt_c - dt_b)


@dataclass(frozen=True)
class AnalysisConfig:
    epsilon: float = 1e-10
    h_scan_points: int = 64
    quadrature_points: int = 32

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if int(self.h_scan_points) != self.h_scan_points or self.h_scan_points < 2:
            raise ConfigError(f"h_scan_points must be an integer >= 2, got {self.h_scan_points!r}")
        if int(self.quadrature_points) != self.quadrature_points or self.quadrature_points < 8:
            raise ConfigError(
                f"quadrature_points must be an integer >= 8, got {self.quadrature_points!r}"
            )


#: Operating point used in the experiment.
FIELD_SOURCE = SourceSpec(
    mu_z=0.100, mu_x=0.0281, mu_y=0.152, p_z=0.33, p_x=0.51, p_y=0.09, p_o=0.07
)


def _build(cls, section: str, raw, required: bool):
    if raw is None:
        if required:
            raise ConfigError(f"missing required section {section!r}")
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown field")
    values = {}
    for key, value in raw.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
        values[key] = value
    if cls is SourceSpec and "p_o" not in values:
        values["p_o"] = 1.0 - sum(values.get(k, 0.0) for k in ("p_z", "p_x", "p_y"))
    if cls is AnalysisConfig:
        for key in ("h_scan_points", "quadrature_points"):
            if key in values and float(values[key]).is_integer():
                values[key] = int(values[key])
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    except ConfigError as exc:
        raise ConfigError(f"{section}.{exc}") from None


def parse_config(text: str, source_name: str = "<config>"):
    """Parse a JSON configuration into (SourceSpec, SystemModel, PulseModel, AnalysisConfig)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source_name}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source_name}: top level must be a JSON object")
    for key in raw:
        if key not in ("source", "system", "pulse", "analysis"):
            raise ConfigError(f"{source_name}: unknown section {key!r}")
    return (
        _build(SourceSpec, "source", raw.get("source"), True),
        _build(SystemModel, "system", raw.get("system"), True),
        _build(PulseModel, "pulse", raw.get("pulse"), False),
        _build(AnalysisConfig, "analysis", raw.get("analysis"), False),
    )


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def _number(token: str, where: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    try:
        value = float(token)
    except ValueError:
        raise LedgerError(f"{where}: not a number: {token!r}") from None
    if not math.isfinite(value):
        raise LedgerError(f"{where}: not finite: {token!r}")
    return value


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


@dataclass(frozen=True)
class CountLedger:
    """Pulses sent, coincidences and error counts per source combination.

    Coincidence and error counts are integers for measured data; expected-value
    ledgers built from the forward model carry floats.
    """

    pulses: Mapping[str, float]
    coincidences: Mapping[str, float]
    errors: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "pulses", MappingProxyType(dict(self.pulses)))
        object.__setattr__(self, "coincidences", MappingProxyType(dict(self.coincidences)))
        object.__setattr__(self, "errors", MappingProxyType(dict(self.errors)))
        for combo in COMBOS:
            if combo not in self.pulses or combo not in self.coincidences:
                raise LedgerError(f"missing combination row {combo!r}")
        for combo in list(self.pulses) + list(self.coincidences):
            if combo not in COMBOS:
                raise LedgerError(f"unknown combination {combo!r}")
        for combo in COMBOS:
            n, m = self.pulses[combo], self.coincidences[combo]
            if n < 0 or m < 0:
                raise LedgerError(f"{combo}: negative count")
            if m > n:
                raise LedgerError(f"{combo}: coincidences exceed pulses ({m} > {n})")
        for (combo, pair), e in self.errors.items():
            if pair not in PAIRS.get(combo, ()):
                raise LedgerError(f"{combo}: unexpected error pair {pair!r}")
            if e < 0:
                raise LedgerError(f"{combo}/{pair}: negative count")
            if e > self.coincidences[combo]:
                raise LedgerError(f"{combo}/{pair}: errors exceed coincidences")

    def n(self, combo: str) -> float:
        return self.pulses[combo]

    def m(self, combo: str) -> float:
        return self.coincidences[combo]

    def error(self, combo: str, pair: str = "all") -> float:
        try:
            return self.errors[(combo, pair)]
        except KeyError:
            raise LedgerError(f"missing error count {combo}/{pair}") from None

    def gain(self, combo: str) -> float:
        n = self.pulses[combo]
        return self.coincidences[combo] / n if n > 0 else 0.0

    @property
    def total_pulses(self) -> float:
        return float(sum(self.pulses.values()))

    def scaled(self, factor: float) -> "CountLedger":
        """All counts multiplied by ``factor`` (floats); used for large-N limits."""
        return CountLedger(
            {k: v * factor for k, v in self.pulses.items()},
            {k: float(v) * factor for k, v in self.coincidences.items()},
            {k: float(v) * factor for k, v in self.errors.items()},
        )

    def counts_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["combo", "pulses", "coincidences"])
        for combo in COMBOS:
            writer.writerow([combo, _fmt(self.pulses[combo]), _fmt(self.coincidences[combo])])
        return buf.getvalue()

    def errors_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["combo", "pair", "errors"])
        for combo, pairs in PAIRS.items():
            for pair in pairs:
                if (combo, pair) in self.errors:
                    writer.writerow([combo, pair, _fmt(self.errors[(combo, pair)])])
        return buf.getvalue()


def _read_rows(path: Path, header: list[str]):
    text = path.read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or [h.strip() for h in rows[0]] != header:
        raise LedgerError(f"{path}: expected header {','.join(header)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise LedgerError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        out.append((lineno, [c.strip() for c in row]))
    return out


def load_counts(path, errors_path=None) -> CountLedger:
    """Read a counts CSV (``combo,pulses,coincidences``) and optional errors CSV."""
    path = Path(path)
    pulses, coincidences, errors = {}, {}, {}
    for lineno, (combo, n, m) in _read_rows(path, ["combo", "pulses", "coincidences"]):
        where = f"{path}:{lineno}"
        if combo not in COMBOS:
            raise LedgerError(f"{where}: unknown combination {combo!r}")
        if combo in pulses:
            raise LedgerError(f"{where}: duplicate combination {combo!r}")
        pulses[combo] = float(_number(n, where))
        coincidences[combo] = _number(m, where)
    if errors_path is not None:
        errors_path = Path(errors_path)
        for lineno, (combo, pair, e) in _read_rows(errors_path, ["combo", "pair", "errors"]):
            where = f"{errors_path}:{lineno}"
            if (combo, pair) in errors:
                raise LedgerError(f"{where}: duplicate error row {combo}/{pair}")
            errors[(combo, pair)] = _number(e, where)
    return CountLedger(pulses, coincidences, errors)


def write_counts(ledger: CountLedger, path, errors_path=None) -> None:
    Path(path).write_text(ledger.counts_csv(), encoding="utf-8")
    if errors_path is not None:
        Path(errors_path).write_text(ledger.errors_csv(), encoding="utf-8")


@dataclass(frozen=True)
class GainTable:
    """Per-combination gain Q and error gain EQ (probabilities per pulse).

    Aggregated ``*_sym`` rows hold the mean gain of the three permutations,
    which is what M/N gives for a ledger with equal per-permutation pulses.
    The ``zzz`` error gain is per pair; ``pair_error_gains`` keeps all three.
    """

    gains: Mapping[str, float]
    error_gains: Mapping[str, float]
    pair_error_gains: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "gains", MappingProxyType(dict(self.gains)))
        object.__setattr__(self, "error_gains", MappingProxyType(dict(self.error_gains)))
        object.__setattr__(self, "pair_error_gains", MappingProxyType(dict(self.pair_error_gains)))
        tol = 1e-15
        for combo, q in self.gains.items():
            eq = self.error_gains.get(combo, 0.0)
            if not (-tol <= eq <= q + tol and q <= 1.0 + tol):
                raise ValueError(f"{combo}: need 0 <= EQ <= Q <= 1 (Q={q!r}, EQ={eq!r})")

    def __getitem__(self, combo: str) -> float:
        try:
            return self.gains[combo]
        except KeyError:
            raise KeyError(f"gain table lacks combination {combo!r}") from None

    def error_gain(self, combo: str) -> float:
        return self.error_gains[combo]

    @classmethod
    def from_ledger(cls, ledger: CountLedger) -> "GainTable":
        """Plug-in gains M/N and E/N."""
        gains = {c: ledger.gain(c) for c in COMBOS}
        eg, pair = {}, {}
        for (combo, p), e in ledger.errors.items():
            n = ledger.n(combo)
            value = e / n if n > 0 else 0.0
            if combo == "zzz":
                pair[p] = value
            else:
                eg[combo] = value
        if pair:
            eg["zzz"] = max(pair.values())
        return cls(gains, eg, pair)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["combo", "gain", "error_gain"])
        for combo in COMBOS:
            if combo in self.gains:
                writer.writerow([combo, repr(float(self.gains[combo])),
                                 repr(float(self.error_gains.get(combo, 0.0)))])
        return buf.getvalue()


@dataclass(frozen=True)
class DecoyEstimate:
    h_low: float
    h_high: float
    s_plus_low: float
    s_minus_high: float
    y111_exp_low: float
    e111_exp_high: float
    y111_real_low: float
    e111_real_high: float

    def __post_init__(self):
        if self.h_low > self.h_high:
            raise ValueError(f"h_low > h_high ({self.h_low!r} > {self.h_high!r})")


@dataclass(frozen=True)
class KeyRateReport:
    rate_per_pulse: float
    rate_per_second: float
    qber_z_ab: float
    qber_z_ac: float
    qber_z_bc: float
    qber_x: float
    decoy: DecoyEstimate
    h_argmin: float
    epsilon: float
    chernoff_applications: int
    reason: str | None = None
    extras: Mapping[str, float] = field(default_factory=dict)

    @property
    def failure_budget(self) -> float:
        return self.chernoff_applications * self.epsilon

    def to_dict(self) -> dict:
        out = asdict(self)
        out["extras"] = dict(self.extras)
        out["failure_budget"] = self.failure_budget
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
