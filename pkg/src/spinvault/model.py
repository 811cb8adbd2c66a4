"""Domain records, time grids, the input signal and the rate algebra.

All rates are angular rates in inverse time units. Only ratios matter to the
dynamics, so any consistent unit system works; the presets use the alkali
decay rate as the unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import DomainError

__all__ = [
    "ControlWaveform",
    "MemoryParams",
    "RateAlgebra",
    "ScheduleSpec",
    "SignalEnvelope",
    "StateTrajectory",
    "TimeGrid",
    "exchange_window",
    "gamma_Omega_of",
    "make_exponential_signal",
    "rate_algebra",
    "storage_grid",
]

SIGNAL_AMPLITUDE = math.exp(3.0) / math.sqrt(math.exp(6.0) - 1.0)


def _frozen(values: Any, dtype: type) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MemoryParams:
    """Effective rates of one memory instance.

    ``gamma_p`` is the optical-dipole decay, ``gamma_s`` and ``gamma_k`` the
    alkali and noble-gas spin decay, ``J`` the collective exchange rate,
    ``C`` the cooperativity and ``Delta`` the one-photon detuning.
    """

    gamma_p: float
    gamma_s: float
    gamma_k: float
    J: float
    C: float
    Delta: float = 0.0

    def __post_init__(self) -> None:
        for name in ("gamma_p", "gamma_s", "gamma_k", "J", "C", "Delta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        for name in ("gamma_p", "gamma_s", "gamma_k", "J"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if self.gamma_p == 0:
            raise DomainError("gamma_p must be > 0")
        if self.C <= 0:
            raise DomainError(f"C must be > 0, got {self.C!r}")

    @property
    def optical_denominator(self) -> complex:
        """gamma_p (1 + C) + i Delta."""
        return complex(self.gamma_p * (1.0 + self.C), self.Delta)

    @property
    def omega_scale(self) -> float:
        """Factor converting the normalized control into the Rabi frequency."""
        return math.sqrt(self.gamma_p * (1.0 + self.C))

    @property
    def broadening_gain(self) -> complex:
        """Gamma_Omega divided by omega_tilde squared."""
        return self.gamma_p * (1.0 + self.C) / self.optical_denominator

    @property
    def drive_gain(self) -> complex:
        """Coefficient of the signal in the alkali equation per unit omega_tilde."""
        return math.sqrt(2.0 * self.C * self.gamma_p) * self.omega_scale / self.optical_denominator

    @property
    def Q(self) -> complex:
        return math.sqrt(2.0 * self.C * self.gamma_p) / self.optical_denominator

    @property
    def alpha(self) -> complex:
        """Reflection coefficient of the bare cavity."""
        return complex(self.gamma_p * (1.0 - self.C), self.Delta) / self.optical_denominator

    @property
    def ceiling(self) -> float:
        """C / (C + 1), the single-transfer efficiency bound."""
        return self.C / (self.C + 1.0)

    def with_(self, **changes: float) -> MemoryParams:
        return replace(self, **changes)


def exchange_window(J: float, gamma_s: float) -> float:
    """Duration of the exchange stage appended after the signal."""
    rate = max(math.sqrt(max(J * J - gamma_s * gamma_s / 4.0, 0.0)), gamma_s)
    if rate == 0:
        raise DomainError("exchange window undefined for J = gamma_s = 0")
    return math.pi / (2.0 * rate)


@dataclass(frozen=True)
class ScheduleSpec:
    """Signal duration ``T``, end of storage ``T_prime`` and dark time ``tau``."""

    T: float
    T_prime: float
    tau: float = 0.0

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise DomainError(f"T must be > 0, got {self.T!r}")
        if self.T_prime < self.T:
            raise DomainError("T_prime must be >= T")
        if self.tau < 0:
            raise DomainError("tau must be >= 0")

    @classmethod
    def standard(cls, params: MemoryParams, T: float, tau: float = 0.0) -> ScheduleSpec:
        """Schedule whose storage stage ends one exchange window after the signal."""
        return cls(T=T, T_prime=T + exchange_window(params.J, params.gamma_s), tau=tau)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n_steps + 1`` samples on ``[t0, t1]``."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self) -> None:
        if not self.t1 > self.t0:
            raise DomainError("t1 must be > t0")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise DomainError("n_steps must be an integer >= 2")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def n_samples(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def index_of(self, t: float) -> int:
        """Index of the sample nearest to ``t``."""
        if t < self.t0 - 0.5 * self.dt or t > self.t1 + 0.5 * self.dt:
            raise DomainError(f"time {t!r} outside grid [{self.t0!r}, {self.t1!r}]")
        return int(min(max(round((t - self.t0) / self.dt), 0), self.n_steps))


def storage_grid(
    schedule: ScheduleSpec,
    steps_per_T: int = 200,
    steps_per_exchange: int = 8,
    max_steps: int = 20000,
) -> tuple[TimeGrid, ScheduleSpec]:
    """Grid on [-2T, T'] with T and the end of storage both on samples.

    The step is the finer of T/steps_per_T and (T'-T)/steps_per_exchange,
    coarsened if the total would exceed ``max_steps``. T' is moved to the
    nearest sample; the number of signal steps is chosen to keep that shift
    small. Returns the grid and the schedule with the realized T'.
    """
    T = schedule.T
    signal_len = 3.0 * T
    exchange_len = schedule.T_prime - T
    h = T / steps_per_T
    if exchange_len > 0:
        h = min(h, exchange_len / steps_per_exchange)
    h = max(h, (signal_len + exchange_len) / max_steps)
    n_sig = max(2, math.ceil(signal_len / h - 1e-9))
    n_ex = 0
    if exchange_len > 0:
        candidates = np.arange(n_sig, n_sig + max(2, n_sig // 4))
        steps = signal_len / candidates
        n_exs = np.maximum(1, np.rint(exchange_len / steps))
        mismatch = np.abs(n_exs * steps - exchange_len)
        best = int(np.argmin(mismatch))
        n_sig, n_ex = int(candidates[best]), int(n_exs[best])
    h = signal_len / n_sig
    t_end = T + n_ex * h
    grid = TimeGrid(-2.0 * T, t_end, n_sig + n_ex)
    return grid, replace(schedule, T_prime=t_end)


@dataclass(frozen=True, eq=False)
class ControlWaveform:
    """Normalized control amplitude and the two spin detunings on a grid."""

    omega_tilde: np.ndarray
    delta_s: np.ndarray
    delta_k: np.ndarray

    def __post_init__(self) -> None:
        omega = _frozen(self.omega_tilde, float)
        ds = _frozen(self.delta_s, float)
        dk = _frozen(self.delta_k, float)
        if omega.ndim != 1 or omega.shape != ds.shape or omega.shape != dk.shape:
            raise DomainError("control sequences must be 1-D with equal lengths")
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(ds)) and np.all(np.isfinite(dk))):
            raise DomainError("control sequences must be finite")
        if np.any(omega < 0):
            raise DomainError("omega_tilde must be >= 0")
        object.__setattr__(self, "omega_tilde", omega)
        object.__setattr__(self, "delta_s", ds)
        object.__setattr__(self, "delta_k", dk)

    @classmethod
    def constant(
        cls, grid: TimeGrid, omega_tilde: float, delta_s: float = 0.0, delta_k: float = 0.0
    ) -> ControlWaveform:
        n = grid.n_samples
        return cls(np.full(n, omega_tilde), np.full(n, delta_s), np.full(n, delta_k))

    def __len__(self) -> int:
        return len(self.omega_tilde)

    @property
    def gamma_Omega(self) -> np.ndarray:
        return self.omega_tilde**2

    def check_grid(self, grid: TimeGrid) -> None:
        if len(self) != grid.n_samples:
            raise DomainError(f"control has {len(self)} samples, grid has {grid.n_samples}")

    def replace(self, **changes: Any) -> ControlWaveform:
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SignalEnvelope:
    """Input field samples on a grid.

    ``edges`` holds, for every step, the signal value just after the step start
    and just before the step end, so jumps located on samples are represented
    exactly. Within a step the signal is linear between those two values.
    """

    grid: TimeGrid
    values: np.ndarray
    norm: float
    edges: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        values = _frozen(self.values, complex)
        if values.shape != (self.grid.n_samples,):
            raise DomainError("signal must have one value per grid sample")
        edges = self.edges
        if edges is None:
            edges = np.stack([values[:-1], values[1:]], axis=1)
        edges = _frozen(edges, complex)
        if edges.shape != (self.grid.n_steps, 2):
            raise DomainError("edges must have shape (n_steps, 2)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def zero(cls, grid: TimeGrid) -> SignalEnvelope:
        return cls(grid, np.zeros(grid.n_samples, complex), 0.0)

    @classmethod
    def from_samples(cls, grid: TimeGrid, values: Any) -> SignalEnvelope:
        """Continuous piecewise-linear signal; the norm is its exact energy."""
        values = np.asarray(values, dtype=complex)
        a, b = values[:-1], values[1:]
        energy = grid.dt / 3.0 * np.sum(np.abs(a) ** 2 + (a * b.conj()).real + np.abs(b) ** 2)
        return cls(grid, values, float(energy))

    def energy_by_quadrature(self) -> float:
        """Energy of the stored edges, exact for the piecewise-linear model."""
        a, b = self.edges[:, 0], self.edges[:, 1]
        return float(self.grid.dt / 3.0 * np.sum(np.abs(a) ** 2 + (a * b.conj()).real + np.abs(b) ** 2))


def make_exponential_signal(T: float, grid: TimeGrid) -> SignalEnvelope:
    """Unit-energy rising exponential A sqrt(2/T) exp((t-T)/T) on [-2T, T]."""
    if not T > 0:
        raise DomainError("T must be > 0")
    tol = 1e-9 * T
    if grid.t0 > -2.0 * T + tol or grid.t1 < T - tol:
        raise DomainError(f"grid [{grid.t0!r}, {grid.t1!r}] does not cover [-2T, T] = [{-2 * T!r}, {T!r}]")
    scale = SIGNAL_AMPLITUDE * math.sqrt(2.0 / T)
    t = grid.times
    inside = (t >= -2.0 * T - tol) & (t <= T + tol)
    values = np.where(inside, scale * np.exp(np.minimum(t - T, 0.0) / T), 0.0)
    mid = 0.5 * (t[:-1] + t[1:])
    on = (mid > -2.0 * T) & (mid < T)
    edges = np.zeros((grid.n_steps, 2))
    edges[on, 0] = scale * np.exp((t[:-1][on] - T) / T)
    edges[on, 1] = scale * np.exp((t[1:][on] - T) / T)
    # A^2 (1 - e^-6) = 1 exactly.
    return SignalEnvelope(grid, values.astype(complex), 1.0, edges.astype(complex))


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """Field amplitudes sampled on ``grid``.

    ``ctrl`` and ``signal`` are the inputs that produced the trajectory; the
    private step data lets quadratures resolve the motion inside each step.
    """

    grid: TimeGrid
    P: np.ndarray
    S: np.ndarray
    K: np.ndarray
    E_in: np.ndarray
    E_out: np.ndarray
    ctrl: ControlWaveform = field(repr=False, default=None)  # type: ignore[assignment]
    signal: SignalEnvelope = field(repr=False, default=None)  # type: ignore[assignment]
    params: MemoryParams = field(repr=False, default=None)  # type: ignore[assignment]
    step_data: Any = field(repr=False, default=None)

    def __post_init__(self) -> None:
        for name in ("P", "S", "K", "E_in", "E_out"):
            arr = _frozen(getattr(self, name), complex)
            if arr.shape != (self.grid.n_samples,):
                raise DomainError(f"{name} must have one value per grid sample")
            object.__setattr__(self, name, arr)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass(frozen=True)
class RateAlgebra:
    """Derived rates at one instant."""

    Gamma_Omega: complex
    Gamma_J: complex
    Q: complex
    alpha: complex
    a_J: complex

    @property
    def gamma_Omega(self) -> float:
        return self.Gamma_Omega.real

    @property
    def gamma_J(self) -> float:
        return self.Gamma_J.real


def gamma_Omega_of(omega_tilde: float) -> float:
    """Power-broadened rate for a normalized control amplitude."""
    if omega_tilde < 0:
        raise DomainError(f"omega_tilde must be >= 0, got {omega_tilde!r}")
    return omega_tilde * omega_tilde


def rate_algebra(params: MemoryParams, omega_tilde: float, delta_s: float = 0.0) -> RateAlgebra:
    """Gamma_Omega, Gamma_J, Q, alpha and a_J for a real control field."""
    gamma_Omega_of(omega_tilde)
    omega = omega_tilde * params.omega_scale
    Gamma_Omega = omega * omega / params.optical_denominator
    Q = params.Q
    denom = Gamma_Omega + params.gamma_s + 1j * delta_s
    if denom == 0:
        Gamma_J = complex(math.inf) if params.J else 0j
        a_J = 0j
    else:
        Gamma_J = params.J**2 / denom
        a_J = 1j * Q * omega * params.J / denom
    return RateAlgebra(Gamma_Omega=complex(Gamma_Omega), Gamma_J=complex(Gamma_J), Q=complex(Q),
                       alpha=params.alpha, a_J=complex(a_J))
