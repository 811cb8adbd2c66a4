"""Forward integration of the uniform-mode memory equations.

    dS/dt = -(gamma_s + Gamma_Omega + i delta_s) S - i J K - Q Omega E_in
    dK/dt = -(gamma_k + i delta_k) K - i J S

The optical dipole follows the spin adiabatically. Controls are held at their
step average over each step and the signal is linear inside a step; each step
is then solved exactly (see ``expint``), which keeps the scheme stable and
accurate when the power-broadened rate is many orders above the slow rates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import DomainError, NumericalError, UndefinedRatioError, ValidityWarning
from .expint import StepMaps, step_maps
from .model import (
    ControlWaveform,
    MemoryParams,
    ScheduleSpec,
    SignalEnvelope,
    StateTrajectory,
    TimeGrid,
)

__all__ = [
    "ConservationReport",
    "EfficiencyReport",
    "LossBudget",
    "RetrievalResult",
    "check_bandwidth",
    "efficiencies",
    "excitation_ledger",
    "integrate",
    "output_field",
    "output_energy",
    "retrieve",
    "reversed_control",
    "step_generators",
]

# Gauss-Legendre nodes on [0, 1] for quadrature inside steps.
_QN, _QW = np.polynomial.legendre.leggauss(4)
_QN = 0.5 * (_QN + 1.0)
_QW = 0.5 * _QW


@dataclass(frozen=True, eq=False)
class StepGenerators:
    """Step-averaged generator entries and drive coefficient."""

    omega_bar: np.ndarray
    a00: np.ndarray
    a11: np.ndarray
    coupling: complex
    beta: np.ndarray


def step_generators(params: MemoryParams, ctrl: ControlWaveform) -> StepGenerators:
    omega_bar = 0.5 * (ctrl.omega_tilde[:-1] + ctrl.omega_tilde[1:])
    ds = 0.5 * (ctrl.delta_s[:-1] + ctrl.delta_s[1:])
    dk = 0.5 * (ctrl.delta_k[:-1] + ctrl.delta_k[1:])
    a00 = -(params.gamma_s + params.broadening_gain * omega_bar**2 + 1j * ds)
    a11 = -(params.gamma_k + 1j * dk)
    beta = -params.drive_gain * omega_bar
    return StepGenerators(omega_bar, a00, a11.astype(complex), -1j * params.J, beta)


class StepData:
    """Step generators and maps of one trajectory; sub-step maps built on demand."""

    def __init__(self, gen: StepGenerators, full: StepMaps, h: float):
        self.gen = gen
        self.full = full
        self.h = h
        self._subs: list[StepMaps] | None = None

    def sub_maps(self) -> list[StepMaps]:
        """Maps over c_j h for every quadrature node c_j."""
        if self._subs is None:
            g = self.gen
            self._subs = [step_maps(g.a00, g.a11, g.coupling, c * self.h) for c in _QN]
        return self._subs


def _forcing(gen: StepGenerators, maps: StepMaps, edges: np.ndarray, frac: float = 1.0) -> np.ndarray:
    e0 = edges[:, 0]
    de = frac * (edges[:, 1] - edges[:, 0])
    return gen.beta[:, None] * (maps.W1 * e0[:, None] + maps.W2 * de[:, None])


def _propagate(U: np.ndarray, F: np.ndarray, s: complex, k: complex) -> tuple[list, list]:
    S = [s]
    K = [k]
    for a, b, c, d, f0, f1 in zip(
        U[:, 0, 0].tolist(), U[:, 0, 1].tolist(), U[:, 1, 0].tolist(), U[:, 1, 1].tolist(),
        F[:, 0].tolist(), F[:, 1].tolist(),
    ):
        s, k = a * s + b * k + f0, c * s + d * k + f1
        S.append(s)
        K.append(k)
    return S, K


def _first_bad(*arrays: np.ndarray) -> int | None:
    bad = ~np.isfinite(arrays[0])
    for arr in arrays[1:]:
        bad |= ~np.isfinite(arr)
    idx = np.flatnonzero(bad)
    return int(idx[0]) if idx.size else None


def _check_inputs(ctrl: ControlWaveform, signal: SignalEnvelope, grid: TimeGrid) -> None:
    ctrl.check_grid(grid)
    if signal.grid.n_steps != grid.n_steps:
        raise DomainError("signal and grid have different sample counts")


def integrate(
    params: MemoryParams,
    ctrl: ControlWaveform,
    signal: SignalEnvelope,
    grid: TimeGrid,
    init: tuple[complex, complex] = (0j, 0j),
) -> StateTrajectory:
    """Integrate the spin amplitudes across ``grid`` from ``init = (S0, K0)``."""
    _check_inputs(ctrl, signal, grid)
    s0, k0 = complex(init[0]), complex(init[1])
    if not (math.isfinite(abs(s0)) and math.isfinite(abs(k0))):
        raise DomainError("initial amplitudes must be finite")
    # Overflow surfaces below as a NumericalError with its index.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        gen = step_generators(params, ctrl)
        maps = step_maps(gen.a00, gen.a11, gen.coupling, grid.dt)
        data = StepData(gen, maps, grid.dt)
        F = _forcing(gen, maps, signal.edges)
        S, K = _propagate(maps.U, F, s0, k0)
    S = np.array(S, dtype=complex)
    K = np.array(K, dtype=complex)
    bad = _first_bad(S, K)
    if bad is not None:
        raise NumericalError("non-finite amplitude during integration", bad)
    E_in = signal.values
    P = _dipole(params, ctrl.omega_tilde, S, E_in)
    E_out = _output(params, ctrl.omega_tilde, S, E_in)
    return StateTrajectory(grid, P, S, K, E_in, E_out, ctrl=ctrl, signal=signal, params=params, step_data=data)


def _dipole(params: MemoryParams, omega: np.ndarray, S: np.ndarray, E: np.ndarray) -> np.ndarray:
    return 1j * (params.omega_scale * omega * S + math.sqrt(2 * params.gamma_p * params.C) * E) / (
        params.optical_denominator
    )


def _output(params: MemoryParams, omega: np.ndarray, S: np.ndarray, E: np.ndarray) -> np.ndarray:
    return params.alpha * E - params.drive_gain * omega * S


def output_field(params: MemoryParams, ctrl: ControlWaveform, traj: StateTrajectory) -> np.ndarray:
    """Cavity output E_in + i sqrt(2 C gamma_p) P on the trajectory samples."""
    P = _dipole(params, ctrl.omega_tilde, traj.S, traj.E_in)
    return traj.E_in + 1j * math.sqrt(2 * params.C * params.gamma_p) * P


def check_bandwidth(params: MemoryParams, T: float) -> bool:
    """Warn when the signal is too fast for the adiabatic dipole; return validity."""
    ok = 1.0 / T <= 0.1 * params.C * params.gamma_p
    if not ok:
        warnings.warn(
            f"signal bandwidth 1/T = {1 / T:.3g} exceeds 0.1 C gamma_p = {0.1 * params.C * params.gamma_p:.3g}",
            ValidityWarning, stacklevel=2,
        )
    return ok


@dataclass(frozen=True, eq=False)
class _Dense:
    """Amplitudes at quadrature nodes inside every step, shape (n_steps, q)."""

    S: np.ndarray
    K: np.ndarray
    E: np.ndarray
    omega_bar: np.ndarray
    h: float


def _step_data(traj: StateTrajectory) -> StepData:
    if traj.params is None or traj.ctrl is None or traj.signal is None:
        raise DomainError("trajectory does not carry its inputs; integrate it with integrate()")
    data = traj.step_data
    if data is None:
        gen = step_generators(traj.params, traj.ctrl)
        data = StepData(gen, step_maps(gen.a00, gen.a11, gen.coupling, traj.grid.dt), traj.grid.dt)
    return data


def _dense(traj: StateTrajectory) -> _Dense:
    signal = traj.signal
    data = _step_data(traj)
    gen = data.gen
    h = traj.grid.dt
    y_s = traj.S[:-1]
    y_k = traj.K[:-1]
    n = traj.grid.n_steps
    S = np.empty((n, len(_QN)), complex)
    K = np.empty_like(S)
    E = np.empty_like(S)
    e0, e1 = signal.edges[:, 0], signal.edges[:, 1]
    for j, (c, maps) in enumerate(zip(_QN, data.sub_maps())):
        F = _forcing(gen, maps, signal.edges, frac=c)
        S[:, j] = maps.U[:, 0, 0] * y_s + maps.U[:, 0, 1] * y_k + F[:, 0]
        K[:, j] = maps.U[:, 1, 0] * y_s + maps.U[:, 1, 1] * y_k + F[:, 1]
        E[:, j] = e0 + c * (e1 - e0)
    return _Dense(S, K, E, gen.omega_bar, h)


def _densities(params: MemoryParams, w: np.ndarray, S: np.ndarray, K: np.ndarray, E: np.ndarray) -> dict[str, np.ndarray]:
    E_out = params.alpha * E - params.drive_gain * w * S
    P = 1j * (params.omega_scale * w * S + math.sqrt(2 * params.gamma_p * params.C) * E) / params.optical_denominator
    return {
        "out": np.abs(E_out) ** 2,
        "in": np.abs(E) ** 2,
        "dipole": 2.0 * params.gamma_p * np.abs(P) ** 2,
        "alkali": 2.0 * params.gamma_s * np.abs(S) ** 2,
        "noble": 2.0 * params.gamma_k * np.abs(K) ** 2,
    }


_PANEL_N, _PANEL_W = np.polynomial.legendre.leggauss(8)


def _graded_rule(stiffness: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on [0, 1] for sums of exp(-r c) transients with r <= stiffness.

    Panels halve in length toward c = 0 until the first one is shorter than
    1/stiffness; each panel carries an 8-point Gauss-Legendre rule.
    """
    m = max(0, math.ceil(math.log2(max(stiffness, 1.0))) + 1)
    edges = [0.0] + [2.0 ** -k for k in range(m, -1, -1)]
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(a + 0.5 * (b - a) * (_PANEL_N + 1.0))
        weights.append(0.5 * (b - a) * _PANEL_W)
    return np.concatenate(nodes), np.concatenate(weights)


def _channel_integrals(traj: StateTrajectory, i1: int, i2: int) -> dict[str, float]:
    """Integrals of every flux and loss density over steps [i1, i2).

    Evaluates the exact step solution on a rule graded to the stiffest step,
    so fast transients after control or signal jumps are resolved.
    """
    params, signal = traj.params, traj.signal
    totals = dict.fromkeys(("out", "in", "dipole", "alkali", "noble"), 0.0)
    if i2 <= i1:
        return totals
    data = _step_data(traj)
    g = data.gen
    h = traj.grid.dt
    sl = slice(i1, i2)
    a00, a11, w_bar, beta = g.a00[sl], g.a11[sl], g.omega_bar[sl], g.beta[sl]
    sub = StepGenerators(w_bar, a00, a11, g.coupling, beta)
    edges = signal.edges[sl]
    y_s, y_k = traj.S[i1:i2], traj.K[i1:i2]
    stiffness = float(h * np.max(np.abs(a00.real))) if a00.size else 0.0
    nodes, weights = _graded_rule(stiffness)
    for c, wt in zip(nodes, weights):
        maps = step_maps(a00, a11, g.coupling, c * h)
        F = _forcing(sub, maps, edges, frac=c)
        S = maps.U[:, 0, 0] * y_s + maps.U[:, 0, 1] * y_k + F[:, 0]
        K = maps.U[:, 1, 0] * y_s + maps.U[:, 1, 1] * y_k + F[:, 1]
        E = edges[:, 0] + c * (edges[:, 1] - edges[:, 0])
        for name, val in _densities(params, w_bar, S, K, E).items():
            totals[name] += float(h * wt * np.sum(val))
    return totals


@dataclass(frozen=True)
class ConservationReport:
    """Both sides of the excitation balance over [t1, t2].

    ``flux_change + population_change`` should equal ``loss`` (which is
    negative); ``residual`` is their difference. The population counts the
    two spins. The dipole follows the spin instantaneously, so its own
    population change is not part of the reduced balance; it is reported as
    ``dipole_change`` and is of order 1/gamma_p.
    """

    t1: float
    t2: float
    flux_change: float
    population_change: float
    loss: float
    residual: float
    dipole_change: float = 0.0


def excitation_ledger(
    traj: StateTrajectory, params: MemoryParams, grid: TimeGrid, t1: float, t2: float
) -> ConservationReport:
    """Photon flux, population change and dissipation between two samples."""
    i1, i2 = grid.index_of(t1), grid.index_of(t2)
    if i2 < i1:
        raise DomainError("t2 must not precede t1")
    return _ledger(traj, i1, i2, _channel_integrals(traj, i1, i2))


def _ledger(traj: StateTrajectory, i1: int, i2: int, tot: dict[str, float]) -> ConservationReport:
    grid = traj.grid
    flux = tot["out"] - tot["in"]
    pop = np.abs(traj.S) ** 2 + np.abs(traj.K) ** 2
    pop_change = float(pop[i2] - pop[i1])
    dip = np.abs(traj.P) ** 2
    loss = -(tot["dipole"] + tot["alkali"] + tot["noble"])
    residual = flux + pop_change - loss
    return ConservationReport(
        float(grid.times[i1]), float(grid.times[i2]), flux, pop_change, loss, residual, float(dip[i2] - dip[i1])
    )


def output_energy(traj: StateTrajectory, tail: bool = True) -> tuple[float, float]:
    """Emitted energy over the grid plus, optionally, the free-decay tail.

    The tail after the last sample uses the final control values held
    constant and is integrated exactly through a Lyapunov equation. Returns
    (energy, population left undrained).
    """
    params, ctrl = traj.params, traj.ctrl
    energy = _channel_integrals(traj, 0, traj.grid.n_steps)["out"]
    y = np.array([traj.S[-1], traj.K[-1]])
    left = float(np.vdot(y, y).real)
    if tail and left > 0 and traj.E_in[-1] == 0:
        w = ctrl.omega_tilde[-1]
        A = np.array([
            [-(params.gamma_s + params.broadening_gain * w * w + 1j * ctrl.delta_s[-1]), -1j * params.J],
            [-1j * params.J, -(params.gamma_k + 1j * ctrl.delta_k[-1])],
        ])
        if np.max(np.linalg.eigvals(A).real) < -1e-12 * max(1.0, np.abs(A).max()):
            weight = np.zeros((2, 2))
            weight[0, 0] = abs(params.drive_gain * w) ** 2
            X = solve_continuous_lyapunov(A.conj().T, -weight)
            energy += float(np.vdot(y, X @ y).real)
            left = 0.0
    return energy, left


def reversed_control(ctrl: ControlWaveform, gamma_s: float, correct: bool = True) -> ControlWaveform:
    """Time-reversed storage control, with gamma_Omega lowered by 2 gamma_s."""
    gamma = ctrl.gamma_Omega[::-1]
    if correct:
        gamma = np.where(gamma > 0, np.maximum(gamma - 2.0 * gamma_s, 0.0), 0.0)
    return ControlWaveform(np.sqrt(gamma), ctrl.delta_s[::-1], ctrl.delta_k[::-1])


@dataclass(frozen=True, eq=False)
class RetrievalResult:
    """Read-out of a unit noble-gas excitation by the reversed control."""

    traj: StateTrajectory
    eta_out: float
    undrained: float


def retrieve(
    params: MemoryParams, ctrl: ControlWaveform, grid: TimeGrid, start: float = 0.0, correct: bool = True
) -> RetrievalResult:
    """Release K = 1 with the time-reversed storage control."""
    ctrl.check_grid(grid)
    rgrid = TimeGrid(start, start + (grid.t1 - grid.t0), grid.n_steps)
    rctrl = reversed_control(ctrl, params.gamma_s, correct=correct)
    traj = integrate(params, rctrl, SignalEnvelope.zero(rgrid), rgrid, init=(0j, 1 + 0j))
    energy, left = output_energy(traj)
    return RetrievalResult(traj, energy, left)


@dataclass(frozen=True)
class LossBudget:
    """Normalized losses during storage; with ``stored`` they sum to one."""

    leakage: float
    dipole: float
    alkali: float
    noble: float
    residual_alkali: float
    initial: float

    @property
    def total(self) -> float:
        return self.leakage + self.dipole + self.alkali + self.noble + self.residual_alkali


@dataclass(frozen=True, eq=False)
class EfficiencyReport:
    eta_in: float
    eta_out: float
    eta_dark: float
    eta_tot: float
    budget: LossBudget
    conservation_residual: float
    retrieval_undrained: float
    max_S2: float
    retrieval: RetrievalResult | None = field(default=None, repr=False)


def efficiencies(
    traj: StateTrajectory,
    signal: SignalEnvelope,
    schedule: ScheduleSpec,
    params: MemoryParams,
    retrieval: bool = True,
) -> EfficiencyReport:
    """Storage, dark-time, retrieval and total efficiencies with a loss budget."""
    grid = traj.grid
    if signal.norm <= 0:
        raise UndefinedRatioError("signal has zero energy")
    iT = grid.index_of(schedule.T_prime)
    K_T = traj.K[iT]
    eta_in = float(abs(K_T) ** 2 / signal.norm)
    tot = _channel_integrals(traj, 0, iT)
    scale = 1.0 / signal.norm
    budget = LossBudget(
        leakage=scale * tot["out"],
        dipole=scale * tot["dipole"],
        alkali=scale * tot["alkali"],
        noble=scale * tot["noble"],
        residual_alkali=scale * float(abs(traj.S[iT]) ** 2),
        initial=scale * float(abs(traj.S[0]) ** 2 + abs(traj.K[0]) ** 2),
    )
    ledger = _ledger(traj, 0, iT, tot)
    eta_dark = math.exp(-2.0 * params.gamma_k * schedule.tau)
    rec = None
    eta_out = float("nan")
    undrained = float("nan")
    if retrieval:
        if abs(K_T) == 0:
            raise UndefinedRatioError("no noble-gas excitation stored; retrieval efficiency undefined")
        ctrl = traj.ctrl
        if iT != grid.n_steps:
            sub = TimeGrid(grid.t0, grid.times[iT], iT)
            ctrl = ControlWaveform(ctrl.omega_tilde[: iT + 1], ctrl.delta_s[: iT + 1], ctrl.delta_k[: iT + 1])
        else:
            sub = grid
        rec = retrieve(params, ctrl, sub, start=schedule.T_prime + schedule.tau)
        eta_out, undrained = rec.eta_out, rec.undrained
    max_S2 = float(np.max(np.abs(traj.S[: iT + 1]) ** 2))
    return EfficiencyReport(
        eta_in=eta_in,
        eta_out=eta_out,
        eta_dark=eta_dark,
        eta_tot=eta_in * eta_dark * eta_out,
        budget=budget,
        conservation_residual=ledger.residual,
        retrieval_undrained=undrained,
        max_S2=max_S2,
        retrieval=rec,
    )
