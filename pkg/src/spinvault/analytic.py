"""Closed-form efficiencies and propagators.

Covers direct storage on the alkali spin, the spin-exchange transfer between
the two gases, the sequential and adiabatic mapping schemes, and the
adiabatic noble-gas solution used to cross-check the full integration.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError, ValidityWarning
from .expint import phi
from .model import (
    SIGNAL_AMPLITUDE,
    ControlWaveform,
    MemoryParams,
    SignalEnvelope,
    TimeGrid,
)

__all__ = [
    "ExchangeParams",
    "ExponentialMode",
    "adiabatic_K_solution",
    "adiabatic_pumped_efficiency",
    "adiabatic_storage_efficiency",
    "adiabatic_total_efficiency",
    "exchange_params",
    "exchange_propagator",
    "exchange_transfer_efficiency",
    "lambda_retrieval_efficiency",
    "lambda_retrieval_first_order",
    "lambda_storage_efficiency",
    "lambda_storage_first_order",
    "sequential_total_efficiency",
    "transfer_inequality_check",
]

FIRST_ORDER_LIMIT = 0.2


def _first_order_flag(gamma_sT: float) -> None:
    if gamma_sT > FIRST_ORDER_LIMIT:
        warnings.warn(
            f"gamma_s T = {gamma_sT:.3g} exceeds {FIRST_ORDER_LIMIT}; first-order formula is inaccurate",
            ValidityWarning, stacklevel=3,
        )


def _ceiling(C: float) -> float:
    if not C > 0:
        raise DomainError(f"C must be > 0, got {C!r}")
    return C / (C + 1.0)


@dataclass(frozen=True)
class ExponentialMode:
    """The exponential pulse of duration scale ``T``.

    For storage it rises as exp(t/T) up to its end; for retrieval it is the
    time reverse, decaying as exp(-t/T) from the retrieval start. With
    ``truncated`` the pulse lasts 3T, otherwise it has an infinite tail.
    """

    T: float
    truncated: bool = True

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise DomainError("T must be > 0")


def _weighted_energy(mode: SignalEnvelope, rate: float, t_ref: float) -> float:
    """Ratio of the integral of |f|^2 exp(rate (t - t_ref)) to that of |f|^2."""
    nodes, weights = np.polynomial.legendre.leggauss(6)
    c = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    a, b = mode.edges[:, 0], mode.edges[:, 1]
    t = mode.grid.times[:-1]
    h = mode.grid.dt
    num = 0.0
    den = 0.0
    for cj, wj in zip(c, w):
        f2 = np.abs(a + cj * (b - a)) ** 2
        num += wj * h * float(np.sum(f2 * np.exp(rate * (t + cj * h - t_ref))))
        den += wj * h * float(np.sum(f2))
    if den == 0:
        raise DomainError("mode has zero energy")
    return num / den


def lambda_storage_efficiency(C: float, gamma_s: float, signal: SignalEnvelope | ExponentialMode,
                              T: float | None = None) -> float:
    """Best storage efficiency onto the alkali spin, C/(C+1) times the
    signal energy weighted by exp(2 gamma_s (t - T)).

    ``T`` is the end of storage; for a sampled signal it defaults to the end
    of the last step carrying signal.
    """
    eta = _ceiling(C)
    if gamma_s < 0:
        raise DomainError("gamma_s must be >= 0")
    if isinstance(signal, ExponentialMode):
        x = gamma_s * signal.T
        trunc = (1.0 - math.exp(-6.0 * (1.0 + x))) * SIGNAL_AMPLITUDE**2 if signal.truncated else 1.0
        return eta * trunc / (1.0 + x)
    if T is None:
        on = np.flatnonzero(np.any(signal.edges != 0, axis=1))
        if on.size == 0:
            raise DomainError("signal has zero energy")
        T = float(signal.grid.times[on[-1] + 1])
    return eta * _weighted_energy(signal, 2.0 * gamma_s, T)


def lambda_storage_first_order(C: float, gamma_s: float, T: float) -> float:
    """C/(C+1) / (1 + gamma_s T) for the exponential signal."""
    return _ceiling(C) / (1.0 + gamma_s * T)


def lambda_retrieval_efficiency(C: float, gamma_s: float, target_mode: SignalEnvelope | ExponentialMode) -> float:
    """Best retrieval efficiency from the alkali spin into a target mode.

    C/(C+1) divided by the mode energy weighted by exp(2 gamma_s (t - t_r)),
    where t_r is the start of the mode's grid.
    """
    eta = _ceiling(C)
    if gamma_s < 0:
        raise DomainError("gamma_s must be >= 0")
    if isinstance(target_mode, ExponentialMode):
        x = gamma_s * target_mode.T
        if not target_mode.truncated:
            if x >= 1.0:
                raise DivergenceError("mode tail decays slower than exp(-gamma_s t); no finite efficiency")
            return eta * (1.0 - x)
        if x == 1.0:
            return eta / (6.0 * SIGNAL_AMPLITUDE**2)
        return eta * (1.0 - x) / (SIGNAL_AMPLITUDE**2 * (1.0 - math.exp(-6.0 * (1.0 - x))))
    return eta / _weighted_energy(target_mode, 2.0 * gamma_s, target_mode.grid.t0)


def lambda_retrieval_first_order(C: float, gamma_s: float, T: float) -> float:
    """C/(C+1) (1 - gamma_s T), retrieval into the reversed exponential."""
    x = gamma_s * T
    _first_order_flag(x)
    return _ceiling(C) * (1.0 - x)


@dataclass(frozen=True)
class ExchangeParams:
    """Frequency mismatch, effective exchange rate and transfer time."""

    delta: float
    J_tilde: complex
    T_pi: float


def exchange_params(params: MemoryParams, delta_s: float = 0.0, delta_k: float = 0.0) -> ExchangeParams:
    """delta = delta_k - delta_s and J_tilde^2 = J^2 - d^2 with
    d = (gamma_s - gamma_k - i delta) / 2; the transfer time is
    re[(pi J_tilde / 2 - gamma_s) / J_tilde^2]."""
    delta = delta_k - delta_s
    d = 0.5 * complex(params.gamma_s - params.gamma_k, -delta)
    J_tilde = cmath.sqrt(params.J**2 - d * d)
    if J_tilde == 0:
        raise DomainError("effective exchange rate vanishes")
    T_pi = ((0.5 * math.pi * J_tilde - params.gamma_s) / J_tilde**2).real
    return ExchangeParams(delta, J_tilde, T_pi)


def _sinc(z: complex) -> complex:
    """sin(z) / z for complex z."""
    if abs(z) < 1e-4:
        z2 = z * z
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0
    return cmath.sin(z) / z


def exchange_propagator(params: MemoryParams, delta_s: float, delta_k: float, duration: float) -> np.ndarray:
    """Matrix taking (S, K) at the start of a control-free window to its end.

    U = e^{mu t} [cos(J~ t) I + t sinc(J~ t) (A - mu I)] for the generator
    A = [[-(gamma_s + i delta_s), -iJ], [-iJ, -(gamma_k + i delta_k)]].
    """
    if duration < 0:
        raise DomainError("duration must be >= 0")
    a00 = -complex(params.gamma_s, delta_s)
    a11 = -complex(params.gamma_k, delta_k)
    mu = 0.5 * (a00 + a11)
    d = 0.5 * (a00 - a11)
    J_tilde = cmath.sqrt(params.J**2 - d * d)
    x = J_tilde * duration
    c = cmath.cos(x)
    s = duration * _sinc(x)
    A = np.array([[a00 - mu, -1j * params.J], [-1j * params.J, a11 - mu]])
    return cmath.exp(mu * duration) * (c * np.eye(2) + s * A)


def exchange_transfer_efficiency(params: MemoryParams, delta_s: float = 0.0, delta_k: float = 0.0,
                                 duration: float | None = None) -> float:
    """|K(T')|^2 / |S(T)|^2 after the exchange window (default T_pi)."""
    if duration is None:
        duration = exchange_params(params, delta_s, delta_k).T_pi
    U = exchange_propagator(params, delta_s, delta_k, duration)
    return float(abs(U[1, 0]) ** 2)


def sequential_total_efficiency(params: MemoryParams, gamma_sT: float, tau: float = 0.0) -> float:
    """(C/(C+1))^2 (1 - x)/(1 + x) exp(-pi gamma_s / J) exp(-2 gamma_k tau), x = gamma_s T."""
    if params.J <= 0:
        raise DomainError("J must be > 0")
    _first_order_flag(gamma_sT)
    return (params.ceiling**2 * (1.0 - gamma_sT) / (1.0 + gamma_sT)
            * math.exp(-math.pi * params.gamma_s / params.J) * math.exp(-2.0 * params.gamma_k * tau))


def _adiabatic_factor(params: MemoryParams, T: float) -> float:
    if params.J <= 0 or not T > 0:
        raise DomainError("J and T must be > 0")
    x = params.gamma_s / (params.J**2 * T)
    if x >= 1.0:
        if x > 1.0:
            warnings.warn("T below gamma_s / J^2: adiabatic mapping cannot store", ValidityWarning, stacklevel=3)
        return 0.0
    return 1.0 - x


def adiabatic_storage_efficiency(params: MemoryParams, T: float) -> float:
    """C/(C+1) (1 - gamma_s / (J^2 T)); retrieval by time reversal is equal."""
    return params.ceiling * _adiabatic_factor(params, T)


def adiabatic_total_efficiency(params: MemoryParams, T: float, tau: float = 0.0) -> float:
    """(C/(C+1))^2 (1 - gamma_s / (J^2 T))^2 exp(-2 gamma_k tau)."""
    f = _adiabatic_factor(params, T)
    return params.ceiling**2 * f * f * math.exp(-2.0 * params.gamma_k * tau)


def adiabatic_pumped_efficiency(C: float, gamma_Omega: float, gamma_s: float, gamma_J: float,
                                gamma_k: float) -> float:
    """Storage-and-retrieval efficiency from the instantaneous weight factor,
    [C/(C+1) gamma_Omega/(gamma_Omega+gamma_s) gamma_J/(gamma_J+gamma_k)]^2."""
    for name, v in (("gamma_Omega", gamma_Omega), ("gamma_s", gamma_s), ("gamma_J", gamma_J), ("gamma_k", gamma_k)):
        if v < 0 or not math.isfinite(v):
            raise DomainError(f"{name} must be finite and >= 0")
    a = gamma_Omega / (gamma_Omega + gamma_s) if gamma_Omega > 0 else 0.0
    b = gamma_J / (gamma_J + gamma_k) if gamma_J > 0 else 0.0
    w = _ceiling(C) * a * b
    return w * w


def _adiabatic_rates(params: MemoryParams, ctrl: ControlWaveform) -> tuple[np.ndarray, np.ndarray]:
    """Noble-gas decay exponent rate and signal coupling a_J on the samples."""
    omega = ctrl.omega_tilde
    gam = params.broadening_gain * omega**2 + params.gamma_s + 1j * ctrl.delta_s
    if np.any(gam == 0):
        raise DomainError("alkali rate vanishes; adiabatic elimination undefined")
    Gamma_J = params.J**2 / gam
    a_J = 1j * params.drive_gain * omega * params.J / gam
    rate = params.gamma_k + Gamma_J + 1j * ctrl.delta_k
    return rate, a_J


def adiabatic_K_solution(params: MemoryParams, ctrl: ControlWaveform, signal: SignalEnvelope,
                         grid: TimeGrid, K0: complex = 0j) -> np.ndarray:
    """Noble-gas amplitude with the alkali spin adiabatically eliminated.

    dK/dt = -(gamma_k + Gamma_J + i delta_k) K + a_J E_in, solved step by step
    with step-averaged rates and linear forcing.
    """
    ctrl.check_grid(grid)
    gam_min = float(np.min(ctrl.gamma_Omega))
    if gam_min < 10.0 * params.J:
        warnings.warn("gamma_Omega < 10 J: alkali spin does not follow adiabatically", ValidityWarning, stacklevel=2)
    rate, a_J = _adiabatic_rates(params, ctrl)
    h = grid.dt
    z = -0.5 * (rate[:-1] + rate[1:]) * h
    f0 = a_J[:-1] * signal.edges[:, 0]
    f1 = a_J[1:] * signal.edges[:, 1]
    decay = np.exp(z)
    drive = h * (phi(1, z) * f0 + phi(2, z) * (f1 - f0))
    K = [complex(K0)]
    k = complex(K0)
    for u, g in zip(decay.tolist(), drive.tolist()):
        k = u * k + g
        K.append(k)
    return np.array(K)


def transfer_inequality_check(ctrl: ControlWaveform, params: MemoryParams, grid: TimeGrid,
                              T: float | None = None) -> float:
    """Integral of |h_J(T, t)|^2 / weight(t) over the grid up to ``T``.

    h_J(T, t) is the noble-gas response at T to a unit signal at t and the
    weight is C/(C+1) gamma_Omega/(gamma_Omega+gamma_s) gamma_J/(gamma_J+gamma_k).
    Rates are held at their step averages, so the integral is exact for the
    piecewise-constant model; it never exceeds one.
    """
    ctrl.check_grid(grid)
    iT = grid.n_steps if T is None else grid.index_of(T)
    gam = ctrl.gamma_Omega
    if np.all(gam[: iT + 1] == 0):
        return 0.0
    rate, _ = _adiabatic_rates(params, ctrl)
    gamma_Omega = (params.broadening_gain * gam).real
    gamma_J = (rate - params.gamma_k - 1j * ctrl.delta_k).real
    # |a_J|^2 / weight reduces to 2 (gamma_J + gamma_k); the direct ratio underflows for weak controls.
    g = np.where((gamma_Omega > 0) & (gamma_J > 0), 2.0 * (gamma_J + params.gamma_k), 0.0)
    r = 0.5 * (rate.real[:-1] + rate.real[1:])[:iT]
    g_bar = 0.5 * (g[:-1] + g[1:])[:iT]
    h = grid.dt
    # Decay exponent from the end of each step to T.
    tail = np.concatenate([np.cumsum((r * h)[::-1])[::-1][1:], [0.0]])
    x = 2.0 * r * h
    step = np.where(x > 1e-12, -np.expm1(-x) / np.where(x > 1e-12, 2.0 * r, 1.0), h)
    return float(np.sum(g_bar * np.exp(-2.0 * tail) * step))
