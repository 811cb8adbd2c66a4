"""Variational storage optimizer.

The objective is Phi = |K(T')|^2 / 2. Its functional gradients come from the
adjoint (Lagrange multiplier) fields s, k integrated backward from T' with
s(T') = 0 and k(T') = K(T'). Controls are improved by heavy-ball gradient
ascent, first on the control amplitude alone and then, optionally, together
with the two detunings.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import (
    EfficiencyReport,
    _QN,
    _QW,
    _dense,
    _step_data,
    check_bandwidth,
    efficiencies,
    integrate,
    step_generators,
)
from .errors import DomainError, NumericalError
from .expint import step_maps
from .model import (
    ControlWaveform,
    MemoryParams,
    ScheduleSpec,
    SignalEnvelope,
    StateTrajectory,
    TimeGrid,
    storage_grid,
)

__all__ = [
    "AdjointTrajectory",
    "OptimizationResult",
    "OptimizerConfig",
    "RegimeLabel",
    "TraceRecord",
    "ascend",
    "classify_regime",
    "continuation_guess",
    "discrete_gradients",
    "gradients",
    "integrate_adjoint",
    "iteration_budget",
    "objective",
    "optimize_storage",
    "seed_controls",
    "SEEDS",
]

SEQUENTIAL_THRESHOLD = 0.95
SEEDS = ("lambda", "adiabatic", "detuned")
DETUNED_SEED_FACTOR = 100.0
PROBE_ITERS = 20
ADIABATIC_THRESHOLD = 0.05


class RegimeLabel(str, enum.Enum):
    SEQUENTIAL = "Sequential"
    ADIABATIC = "Adiabatic"
    INTERMEDIATE = "Intermediate"


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    grid: TimeGrid
    s: np.ndarray
    k: np.ndarray


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of the gradient ascent.

    ``lambda_omega`` divides a normalized step: the control step is
    ``grad / (lambda_omega * scale)`` where ``scale`` is fixed on the first
    iteration so that ``lambda_omega = 1`` moves the peak control by
    ``initial_step`` of its size. ``seed`` names one of SEEDS, or
    ``"auto"`` to probe each available seed briefly and continue the best.
    """

    lambda_omega: float = 1.0
    momentum_alpha: float = 0.9
    max_iters: int | None = None
    convergence_window: int = 50
    convergence_rtol: float = 1e-6
    optimize_detunings: bool = False
    detuning_iters: int | None = None
    seed: str = "auto"
    initial_step: float = 0.05
    steps_per_T: int = 200
    steps_per_exchange: int = 8
    max_steps: int = 20000

    def __post_init__(self) -> None:
        if not 1e-2 <= self.lambda_omega <= 1e2:
            raise DomainError("lambda_omega must lie in [1e-2, 1e2]")
        if not 0.0 <= self.momentum_alpha < 1.0:
            raise DomainError("momentum_alpha must lie in [0, 1)")
        if self.max_iters is not None and self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.convergence_window < 2:
            raise DomainError("convergence_window must be >= 2")
        if self.seed not in SEEDS + ("auto",):
            raise DomainError(f"unknown seed strategy {self.seed!r}")
        if not 0 < self.initial_step <= 1:
            raise DomainError("initial_step must lie in (0, 1]")


def iteration_budget(params: MemoryParams, T: float) -> int:
    """Default iteration count: longer for strong exchange with long signals."""
    return 5000 if params.J >= 10.0 * params.gamma_s and params.gamma_s * T >= 10.0 else 500


def objective(traj: StateTrajectory, T_prime: float) -> float:
    return 0.5 * float(abs(traj.K[traj.grid.index_of(T_prime)]) ** 2)


def integrate_adjoint(
    params: MemoryParams,
    ctrl: ControlWaveform,
    K_final: complex,
    grid: TimeGrid,
    T_prime: float | None = None,
    U: np.ndarray | None = None,
) -> AdjointTrajectory:
    """Backward integration of the adjoint fields from (s, k) = (0, K_final).

    Uses the adjoint of the forward step maps, so it is the exact transpose of
    the forward scheme. Samples after ``T_prime`` carry zero. ``U`` may pass
    the forward step propagators when they are already known.
    """
    ctrl.check_grid(grid)
    iT = grid.n_steps if T_prime is None else grid.index_of(T_prime)
    if U is None:
        gen = step_generators(params, ctrl)
        U = step_maps(gen.a00[:iT], gen.a11[:iT], gen.coupling, grid.dt).U
    else:
        U = U[:iT]
    s, k = 0j, complex(K_final)
    s_out = [s]
    k_out = [k]
    for a, b, c, d in zip(
        U[::-1, 0, 0].conj().tolist(), U[::-1, 0, 1].conj().tolist(),
        U[::-1, 1, 0].conj().tolist(), U[::-1, 1, 1].conj().tolist(),
    ):
        s, k = a * s + c * k, b * s + d * k
        s_out.append(s)
        k_out.append(k)
    s_arr = np.zeros(grid.n_samples, complex)
    k_arr = np.zeros(grid.n_samples, complex)
    s_arr[: iT + 1] = s_out[::-1]
    k_arr[: iT + 1] = k_out[::-1]
    bad = np.flatnonzero(~(np.isfinite(s_arr) & np.isfinite(k_arr)))
    if bad.size:
        raise NumericalError("non-finite adjoint", int(bad[-1]))
    return AdjointTrajectory(grid, s_arr, k_arr)


def gradients(
    traj: StateTrajectory,
    adjoint: AdjointTrajectory,
    ctrl: ControlWaveform,
    signal: SignalEnvelope,
    params: MemoryParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise functional gradients of Phi on the samples.

    Returns (dPhi/d omega_tilde, dPhi/d delta_k, dPhi/d delta_s).
    """
    sc = adjoint.s.conj()
    d_omega = -(sc * (2.0 * params.broadening_gain * ctrl.omega_tilde * traj.S
                      + params.drive_gain * signal.values)).real
    d_dk = (adjoint.k.conj() * traj.K).imag
    d_ds = (sc * traj.S).imag
    return d_omega, d_dk, d_ds


def discrete_gradients(
    traj: StateTrajectory, params: MemoryParams, T_prime: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact derivatives of the discrete Phi with respect to every control sample.

    The step maps hold the step average of each control, so a sample enters
    the two adjacent steps with weight 1/2. Within a step the derivative is
    the integral of the gradient density along the exact step solution,
    evaluated with Gauss-Legendre quadrature.
    """
    grid, ctrl = traj.grid, traj.ctrl
    iT = grid.index_of(T_prime)
    data = _step_data(traj)
    adj = integrate_adjoint(params, ctrl, traj.K[iT], grid, T_prime, U=data.full.U)
    gen = data.gen
    dense = _dense(traj)
    subs = data.sub_maps()
    h = grid.dt
    lam_s = adj.s[1:]
    lam_k = adj.k[1:]
    q = len(_QN)
    G_om = np.zeros(grid.n_steps)
    G_ds = np.zeros(grid.n_steps)
    G_dk = np.zeros(grid.n_steps)
    for j in range(q):
        # The nodes are symmetric, so 1 - c_j is node q-1-j.
        U = subs[q - 1 - j].U
        s = U[:, 0, 0].conj() * lam_s + U[:, 1, 0].conj() * lam_k
        k = U[:, 0, 1].conj() * lam_s + U[:, 1, 1].conj() * lam_k
        S, K, E = dense.S[:, j], dense.K[:, j], dense.E[:, j]
        w = h * _QW[j]
        G_om += w * (-(s.conj() * (2.0 * params.broadening_gain * gen.omega_bar * S + params.drive_gain * E)).real)
        G_ds += w * (s.conj() * S).imag
        G_dk += w * (k.conj() * K).imag
    G_om[iT:] = G_ds[iT:] = G_dk[iT:] = 0.0

    def to_nodes(G: np.ndarray) -> np.ndarray:
        out = np.zeros(grid.n_samples)
        out[:-1] += 0.5 * G
        out[1:] += 0.5 * G
        return out

    return to_nodes(G_om), to_nodes(G_dk), to_nodes(G_ds)


def ascend(
    ctrl_prev2: ControlWaveform,
    ctrl_prev1: ControlWaveform,
    grads: tuple[np.ndarray, np.ndarray, np.ndarray],
    config: OptimizerConfig,
    adaptive_scales: tuple[float, float, float],
    alpha: float | None = None,
) -> ControlWaveform:
    """One heavy-ball update x = (1 + a) x1 - a x2 + g / lambda.

    ``adaptive_scales`` holds (1/lambda_omega, 1/lambda_delta_k,
    1/lambda_delta_s); a zero scale freezes that control. The control
    amplitude is projected onto omega_tilde >= 0.
    """
    a = config.momentum_alpha if alpha is None else alpha
    g_om, g_dk, g_ds = grads
    s_om, s_dk, s_ds = adaptive_scales

    def upd(x1: np.ndarray, x2: np.ndarray, g: np.ndarray, scale: float) -> np.ndarray:
        if scale == 0:
            return x1
        return (1.0 + a) * x1 - a * x2 + scale * np.asarray(g)

    om = np.maximum(upd(ctrl_prev1.omega_tilde, ctrl_prev2.omega_tilde, g_om, s_om), 0.0)
    dk = upd(ctrl_prev1.delta_k, ctrl_prev2.delta_k, g_dk, s_dk)
    ds = upd(ctrl_prev1.delta_s, ctrl_prev2.delta_s, g_ds, s_ds)
    return ControlWaveform(om, ds, dk)


def classify_regime(traj: StateTrajectory, T_prime: float | None = None) -> RegimeLabel:
    """Label by the peak alkali excitation over the storage stage."""
    end = traj.grid.n_steps if T_prime is None else traj.grid.index_of(T_prime)
    peak = float(np.max(np.abs(traj.S[: end + 1]) ** 2))
    return _label(peak)


def _label(peak: float) -> RegimeLabel:
    if peak >= SEQUENTIAL_THRESHOLD:
        return RegimeLabel.SEQUENTIAL
    if peak <= ADIABATIC_THRESHOLD:
        return RegimeLabel.ADIABATIC
    return RegimeLabel.INTERMEDIATE


def seed_controls(params: MemoryParams, T: float, grid: TimeGrid, schedule: ScheduleSpec) -> dict[str, ControlWaveform]:
    """Square-pulse initial guesses.

    ``lambda`` drives the alkali spin directly at gamma_Omega = 1/T + gamma_s
    while the signal is on. ``adiabatic`` holds gamma_Omega = J^2 T -
    gamma_s, the rate at which the noble-gas spin follows the signal through
    a virtual alkali excitation, over the whole storage stage.
    ``detuned`` is the ``lambda`` pulse with the noble gas detuned by
    DETUNED_SEED_FACTOR * J while the signal is on, so exchange cannot pull
    the excitation back into the alkali spin before the transfer.
    """
    t = grid.times
    tol = 0.5 * grid.dt
    seeds = {}
    lam = math.sqrt(1.0 / T + params.gamma_s)
    on = t <= T + tol
    seeds["lambda"] = ControlWaveform(np.where(on, lam, 0.0), np.zeros_like(t), np.zeros_like(t))
    if params.J > 0:
        dk = np.where(on, DETUNED_SEED_FACTOR * params.J, 0.0)
        seeds["detuned"] = ControlWaveform(seeds["lambda"].omega_tilde, np.zeros_like(t), dk)
    ad2 = params.J**2 * T - params.gamma_s
    if ad2 > 0:
        seeds["adiabatic"] = ControlWaveform.constant(grid, math.sqrt(ad2))
    return seeds


def continuation_guess(
    prev_solution: ControlWaveform, prev_J: float, new_J: float, T: float, traj: StateTrajectory
) -> tuple[ControlWaveform, ControlWaveform]:
    """Two seeds for a neighbouring exchange rate.

    ``guess_a`` keeps the previous optimum up to the peak of |K| and pads
    zeros after it. ``guess_b`` is a square pulse at the mean previous control
    over -T/2 <= t <= T. ``traj`` is the previous optimum's trajectory.
    """
    if prev_J <= 0 or new_J <= 0:
        raise DomainError("exchange rates must be > 0")
    t = traj.grid.times
    prev_solution.check_grid(traj.grid)
    peak = int(np.argmax(np.abs(traj.K)))
    om_a = prev_solution.omega_tilde.copy()
    om_a[peak + 1:] = 0.0
    zeros = np.zeros_like(t)
    guess_a = ControlWaveform(om_a, zeros, zeros)
    window = (t >= -0.5 * T - 1e-12 * T) & (t <= T + 1e-12 * T)
    level = float(np.mean(prev_solution.omega_tilde[window])) if np.any(window) else 0.0
    guess_b = ControlWaveform(np.full_like(t, level), zeros, zeros)
    return guess_a, guess_b


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    stage: int
    seed: str
    phi: float
    eta_in: float
    regime: str


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    ctrl: ControlWaveform
    traj: StateTrajectory
    report: EfficiencyReport
    regime: RegimeLabel
    schedule: ScheduleSpec
    trace: list[TraceRecord] = field(default_factory=list, repr=False)
    seed: str = ""

    def __iter__(self):
        return iter((self.ctrl, self.traj, self.report, self.regime))


@dataclass
class _Run:
    ctrl: ControlWaveform
    traj: StateTrajectory
    phi: float


def _evaluate(params: MemoryParams, ctrl: ControlWaveform, signal: SignalEnvelope, grid: TimeGrid, T_prime: float) -> _Run:
    traj = integrate(params, ctrl, signal, grid)
    phi = objective(traj, T_prime)
    if not math.isfinite(phi):
        raise NumericalError("objective is not finite")
    return _Run(ctrl, traj, phi)


def _ascent(
    params: MemoryParams,
    signal: SignalEnvelope,
    grid: TimeGrid,
    T_prime: float,
    start: ControlWaveform,
    config: OptimizerConfig,
    iters: int,
    detunings: bool,
    stage: int,
    seed: str,
    trace: list[TraceRecord],
    on_iteration: Callable[[TraceRecord], None] | None,
) -> _Run:
    iT = grid.index_of(T_prime)
    mask = np.zeros(grid.n_samples)
    mask[: iT + 1] = 1.0
    weights = np.full(grid.n_samples, grid.dt)
    weights[[0, -1]] *= 0.5
    cur = _evaluate(params, start, signal, grid, T_prime)
    best = cur
    prev = cur.ctrl
    history = [cur.phi]
    om_scale = 0.0
    mult = 1.0
    streak = 0
    n_since_reset = 0
    for it in range(1, iters + 1):
        g_om, g_dk, g_ds = (g / weights for g in discrete_gradients(cur.traj, params, T_prime))
        g_om = g_om * mask
        if om_scale == 0.0:
            peak_g = float(np.max(np.abs(g_om)))
            if peak_g == 0:
                break
            ref = float(np.max(cur.ctrl.omega_tilde)) or math.sqrt(1.0 / (grid.t1 - grid.t0))
            om_scale = config.initial_step * ref / peak_g / config.lambda_omega
        scales = [mult * om_scale, 0.0, 0.0]
        if detunings:
            g_dk = g_dk * mask
            g_ds = g_ds * mask
            gam = cur.ctrl.gamma_Omega[: iT + 1]
            scales[1] = mult * float(np.mean(params.J**2 / (gam + params.gamma_s)))
            scales[2] = mult * float(np.mean(gam))
        alpha = config.momentum_alpha if n_since_reset >= 2 else 0.0
        nxt_ctrl = ascend(prev, cur.ctrl, (g_om, g_dk, g_ds), config, tuple(scales), alpha=alpha)
        nxt = _evaluate(params, nxt_ctrl, signal, grid, T_prime)
        if nxt.phi < cur.phi:
            # Overshoot: restart from the best point with a shorter step.
            mult *= 0.5
            prev = best.ctrl
            cur = best
            n_since_reset = 0
            streak = 0
        else:
            prev, cur = cur.ctrl, nxt
            n_since_reset += 1
            streak += 1
            if streak >= 20:
                mult = min(mult * 1.5, 1.0)
                streak = 0
            if cur.phi > best.phi:
                best = cur
        history.append(best.phi)
        peak = float(np.max(np.abs(cur.traj.S[: iT + 1]) ** 2))
        rec = TraceRecord(len(trace), stage, seed, cur.phi, 2.0 * cur.phi / signal.norm, _label(peak).value)
        trace.append(rec)
        if on_iteration is not None:
            on_iteration(rec)
        w = config.convergence_window
        if len(history) > w and best.phi > 0:
            if abs(history[-1] - history[-1 - w]) / best.phi < config.convergence_rtol:
                break
        if mult < 1e-8:
            break
    return best


def optimize_storage(
    params: MemoryParams,
    signal: SignalEnvelope | None,
    schedule: ScheduleSpec,
    config: OptimizerConfig | None = None,
    grid: TimeGrid | None = None,
    initial: ControlWaveform | None = None,
    on_iteration: Callable[[TraceRecord], None] | None = None,
) -> OptimizationResult:
    """Optimize the storage controls for the exponential signal.

    Without an explicit ``grid`` the storage grid is built from ``schedule``
    and T' moves onto the nearest sample. ``signal`` defaults to the
    unit-energy exponential on that grid.
    """
    from .model import make_exponential_signal

    config = config or OptimizerConfig()
    T = schedule.T
    check_bandwidth(params, T)
    if grid is None:
        grid, schedule = storage_grid(schedule, config.steps_per_T, config.steps_per_exchange, config.max_steps)
    if signal is None:
        signal = make_exponential_signal(T, grid)
    iters = config.max_iters or iteration_budget(params, T)
    T_prime = schedule.T_prime
    if initial is not None:
        initial.check_grid(grid)
        starts = {"initial": initial}
    else:
        seeds = seed_controls(params, T, grid, schedule)
        if config.seed != "auto":
            if config.seed not in seeds:
                raise DomainError(f"seed {config.seed!r} not available for these parameters")
            seeds = {config.seed: seeds[config.seed]}
        starts = seeds
    trace: list[TraceRecord] = []

    def climb(name: str, start: ControlWaveform, n: int) -> _Run:
        run = _ascent(params, signal, grid, T_prime, start, config, n, False, 1, name, trace, on_iteration)
        if config.optimize_detunings:
            d_iters = config.detuning_iters or n
            run = _ascent(params, signal, grid, T_prime, run.ctrl, config, d_iters, True, 2, name, trace, on_iteration)
        return run

    best: _Run | None = None
    best_seed = ""
    if len(starts) == 1:
        best_seed, start = next(iter(starts.items()))
        best = climb(best_seed, start, iters)
    else:
        # Short probe of every seed, then the rest of the budget on the best.
        probe = min(iters, PROBE_ITERS)
        for name, start in starts.items():
            run = _ascent(params, signal, grid, T_prime, start, config, probe, False, 0, name, trace, on_iteration)
            if best is None or run.phi > best.phi:
                best, best_seed = run, name
        assert best is not None
        if iters > probe or config.optimize_detunings:
            best = climb(best_seed, best.ctrl, max(iters - probe, 1))
    assert best is not None
    report = efficiencies(best.traj, signal, schedule, params)
    regime = classify_regime(best.traj, T_prime)
    return OptimizationResult(best.ctrl, best.traj, report, regime, schedule, trace, best_seed)
