"""Simulation and finite-key analysis for three-user measurement-device-independent
conference key agreement with four-intensity decoy states."""

from __future__ import annotations

from .channel import expected_gains, expected_ledger, infinite_decoy_key_rate, setting_gain
from .chernoff import chernoff_expectation_bounds, chernoff_observation_bounds
from .decoy import asymptotic_bounds, asymptotic_key_rate, binary_entropy, key_rate_four_intensity
from .finite import FiniteKeyAnalysis, InfeasibleLedger, finite_key_rate
from .ghz import qber_x
from .model import (
    FIELD_SOURCE,
    AnalysisConfig,
    ConfigError,
    CountLedger,
    GainTable,
    KeyRateReport,
    LedgerError,
    PulseModel,
    SourceSpec,
    SystemModel,
    load_config,
    load_counts,
    write_counts,
)
from .optimize import OptimizationResult, optimize_four_intensity, optimize_three_intensity
from .simulate import SimPlan, simulate_counts, simulate_hom_scan
from .threeint import ThreeIntensityParams, three_intensity_rate

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "ConfigError",
    "CountLedger",
    "FiniteKeyAnalysis",
    "GainTable",
    "InfeasibleLedger",
    "KeyRateReport",
    "LedgerError",
    "OptimizationResult",
    "FIELD_SOURCE",
    "PulseModel",
    "SimPlan",
    "SourceSpec",
    "SystemModel",
    "ThreeIntensityParams",
    "asymptotic_bounds",
    "asymptotic_key_rate",
    "binary_entropy",
    "chernoff_expectation_bounds",
    "chernoff_observation_bounds",
    "expected_gains",
    "expected_ledger",
    "finite_key_rate",
    "infinite_decoy_key_rate",
    "key_rate_four_intensity",
    "load_config",
    "load_counts",
    "optimize_four_intensity",
    "optimize_three_intensity",
    "qber_x",
    "setting_gain",
    "simulate_counts",
    "simulate_hom_scan",
    "three_intensity_rate",
    "write_counts",
]
