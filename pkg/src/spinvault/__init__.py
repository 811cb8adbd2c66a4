"""Optical quantum memory in collective alkali and noble-gas spins.

Models the cavity-coupled alkali spin exchanging excitations with a
noble-gas spin, optimizes storage controls by gradient ascent, evaluates the
closed-form efficiencies and the diffusion modes of a spherical cell.
"""

from .analytic import (
    adiabatic_K_solution,
    adiabatic_pumped_efficiency,
    adiabatic_total_efficiency,
    exchange_params,
    exchange_propagator,
    lambda_retrieval_efficiency,
    lambda_storage_efficiency,
    sequential_total_efficiency,
    transfer_inequality_check,
)
from .dynamics import efficiencies, excitation_ledger, integrate, retrieve
from .errors import (
    DivergenceError,
    DomainError,
    NumericalError,
    ScenarioError,
    SpinvaultError,
    UndefinedRatioError,
    ValidityWarning,
)
from .model import (
    ControlWaveform,
    MemoryParams,
    ScheduleSpec,
    SignalEnvelope,
    StateTrajectory,
    TimeGrid,
    make_exponential_signal,
    storage_grid,
)
from .modes import CellSpec, ModeBasis, build_mode_basis, gamma_diff, multimode_exchange
from .optimizer import OptimizerConfig, RegimeLabel, classify_regime, optimize_storage

__version__ = "0.1.0"

__all__ = [
    "CellSpec",
    "ControlWaveform",
    "DivergenceError",
    "DomainError",
    "MemoryParams",
    "ModeBasis",
    "NumericalError",
    "OptimizerConfig",
    "RegimeLabel",
    "ScenarioError",
    "ScheduleSpec",
    "SignalEnvelope",
    "SpinvaultError",
    "StateTrajectory",
    "TimeGrid",
    "UndefinedRatioError",
    "ValidityWarning",
    "adiabatic_K_solution",
    "adiabatic_pumped_efficiency",
    "adiabatic_total_efficiency",
    "build_mode_basis",
    "classify_regime",
    "efficiencies",
    "exchange_params",
    "exchange_propagator",
    "excitation_ledger",
    "gamma_diff",
    "integrate",
    "lambda_retrieval_efficiency",
    "lambda_storage_efficiency",
    "make_exponential_signal",
    "multimode_exchange",
    "optimize_storage",
    "retrieve",
    "sequential_total_efficiency",
    "storage_grid",
    "transfer_inequality_check",
]
