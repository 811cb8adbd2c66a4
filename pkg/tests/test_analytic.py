import cmath
import math
import warnings

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import FIG, lambda_constant_storage
from spinvault.analytic import (
    ExponentialMode,
    adiabatic_K_solution,
    adiabatic_pumped_efficiency,
    adiabatic_storage_efficiency,
    adiabatic_total_efficiency,
    exchange_params,
    exchange_propagator,
    exchange_transfer_efficiency,
    lambda_retrieval_efficiency,
    lambda_retrieval_first_order,
    lambda_storage_efficiency,
    lambda_storage_first_order,
    sequential_total_efficiency,
    transfer_inequality_check,
)
from spinvault.dynamics import integrate, output_energy
from spinvault.errors import DivergenceError, DomainError, ValidityWarning
from spinvault.model import (
    ControlWaveform,
    MemoryParams,
    ScheduleSpec,
    SignalEnvelope,
    TimeGrid,
    make_exponential_signal,
    storage_grid,
)

FIG_P = MemoryParams(**FIG)


def generator(p, ds, dk):
    return np.array([[-(p.gamma_s + 1j * ds), -1j * p.J], [-1j * p.J, -(p.gamma_k + 1j * dk)]])


# ---- direct storage and retrieval ----

@pytest.mark.parametrize("C", [0.5, 3.0, 100.0])
def test_lossless_spin_reaches_ceiling(C):
    ceil = C / (C + 1)
    assert lambda_storage_efficiency(C, 0.0, ExponentialMode(1.0, truncated=False)) == ceil
    assert lambda_retrieval_efficiency(C, 0.0, ExponentialMode(1.0, truncated=False)) == ceil
    assert lambda_storage_efficiency(C, 0.0, ExponentialMode(1.0)) == pytest.approx(ceil, rel=1e-15)
    assert lambda_retrieval_efficiency(C, 0.0, ExponentialMode(1.0)) == pytest.approx(ceil, rel=1e-15)


def test_storage_examples():
    assert lambda_storage_efficiency(100, 1.0, ExponentialMode(1e-3, truncated=False)) == pytest.approx(0.98910990, abs=1e-8)
    assert lambda_storage_efficiency(100, 1.0, ExponentialMode(1e-3)) == pytest.approx(0.98912460, abs=1e-8)
    assert lambda_storage_efficiency(100, 1.0, ExponentialMode(1.0, truncated=False)) == pytest.approx(0.49505, abs=1e-5)
    assert lambda_storage_first_order(100, 1.0, 1e-3) == pytest.approx(100 / 101 / 1.001, rel=1e-15)


def test_storage_of_sampled_signal_matches_exponential_mode():
    grid = TimeGrid(-2.0, 1.0, 3000)
    sig = make_exponential_signal(1.0, grid)
    for x in (1e-3, 0.3, 1.0):
        ref = lambda_storage_efficiency(10.0, x, ExponentialMode(1.0))
        assert lambda_storage_efficiency(10.0, x, sig) == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("x", [1e-3, 0.1, 1.0])
def test_optimal_storage_bounds_constant_control(x):
    # The constant control is optimal only for the untruncated pulse.
    opt = lambda_storage_efficiency(10.0, x, ExponentialMode(1.0))
    const = lambda_constant_storage(10.0, x)
    assert const <= opt
    assert opt - const < 3e-3 * math.exp(-6 * x)


def test_retrieval_examples():
    assert lambda_retrieval_efficiency(100, 1.0, ExponentialMode(1e-3)) == pytest.approx(0.98912, abs=1e-5)
    assert lambda_retrieval_efficiency(100, 1.0, ExponentialMode(1e-3, False)) == pytest.approx(0.98910891, abs=1e-8)
    with pytest.warns(ValidityWarning):
        assert lambda_retrieval_first_order(100, 1.0, 1.0) == 0.0
    assert 0 < lambda_retrieval_efficiency(100, 1.0, ExponentialMode(1.0)) < 1
    with pytest.raises(DivergenceError):
        lambda_retrieval_efficiency(100, 1.0, ExponentialMode(2.0, truncated=False))


@pytest.mark.parametrize("x", [1e-3, 0.05, 0.4])
def test_retrieval_matches_integrated_emission(x):
    # Constant read-out at gamma_Omega = 1/T - gamma_s emits the decaying exponential.
    C = 20.0
    # A decaying, decoupled noble gas lets the free-decay tail be summed.
    p = MemoryParams(gamma_p=1e7, gamma_s=x, gamma_k=0.1, J=0.0, C=C)
    grid = TimeGrid(0.0, 3.0, 3000)
    ctrl = ControlWaveform.constant(grid, math.sqrt(1.0 - x))
    tr = integrate(p, ctrl, SignalEnvelope.zero(grid), grid, init=(1.0, 0.0))
    energy, left = output_energy(tr)
    assert left == 0.0
    assert energy == pytest.approx(lambda_retrieval_efficiency(C, x, ExponentialMode(1.0, truncated=False)), abs=1e-9)


def test_retrieval_of_sampled_mode():
    grid = TimeGrid(0.0, 3.0, 3000)
    mode = SignalEnvelope.from_samples(grid, np.exp(-grid.times))
    ref = lambda_retrieval_efficiency(5.0, 0.2, ExponentialMode(1.0))
    assert lambda_retrieval_efficiency(5.0, 0.2, mode) == pytest.approx(ref, rel=1e-6)


def test_rejects_bad_inputs():
    with pytest.raises(DomainError):
        lambda_storage_efficiency(0.0, 1.0, ExponentialMode(1.0))
    with pytest.raises(DomainError):
        lambda_storage_efficiency(1.0, -1.0, ExponentialMode(1.0))
    with pytest.raises(DomainError):
        ExponentialMode(0.0)


# ---- spin exchange ----

def test_exchange_params_lossless():
    p = MemoryParams(gamma_p=1e6, gamma_s=0.0, gamma_k=0.0, J=40.0, C=1.0)
    ep = exchange_params(p)
    assert ep.J_tilde == 40.0 and ep.delta == 0.0
    assert ep.T_pi == pytest.approx(math.pi / 80.0, rel=1e-15)
    assert exchange_params(p, 1.0, 3.5).delta == 2.5


def test_lossless_pi_pulse_is_antidiagonal():
    p = MemoryParams(gamma_p=1e6, gamma_s=0.0, gamma_k=0.0, J=40.0, C=1.0)
    ds = dk = 7.0
    U = exchange_propagator(p, ds, dk, math.pi / 80.0)
    phase = cmath.exp(-1j * (ds + dk) * math.pi / 160.0)
    assert np.allclose(U, [[0, -1j * phase], [-1j * phase, 0]], atol=1e-14)


def test_propagator_matches_expm(rng):
    worst = 0.0
    for _ in range(100):
        p = MemoryParams(gamma_p=1.0, gamma_s=rng.uniform(0, 5), gamma_k=rng.uniform(0, 2), J=rng.uniform(0, 10), C=1.0)
        ds, dk, t = rng.normal(0, 3), rng.normal(0, 3), rng.uniform(0, 2)
        worst = max(worst, np.abs(expm(generator(p, ds, dk) * t) - exchange_propagator(p, ds, dk, t)).max())
    assert worst <= 1e-10


def test_propagator_at_exceptional_point():
    # J equals the damping mismatch: the eigenvalues coalesce.
    p = MemoryParams(gamma_p=1.0, gamma_s=2.0, gamma_k=0.0, J=1.0, C=1.0)
    assert np.abs(expm(generator(p, 0, 0) * 0.7) - exchange_propagator(p, 0, 0, 0.7)).max() < 1e-13


def test_large_mismatch_decouples_noble_gas():
    p = MemoryParams(gamma_p=1.0, gamma_s=1.0, gamma_k=0.3, J=10.0, C=1.0)
    tau, dk = 2.0, 1e6
    U = exchange_propagator(p, 0.0, dk, tau)
    assert abs(U[1, 1]) == pytest.approx(math.exp(-0.3 * tau), rel=1e-4)
    assert abs(U[0, 1]) < 1e-4


def test_transfer_at_t_pi():
    p = MemoryParams(gamma_p=1e3, gamma_s=1.0, gamma_k=0.0, J=100.0, C=100.0)
    ep = exchange_params(p)
    eta = exchange_transfer_efficiency(p)
    ref = abs(expm(generator(p, 0, 0) * ep.T_pi)[1, 0]) ** 2
    assert eta == pytest.approx(ref, abs=1e-14)
    assert eta == pytest.approx(0.98443918, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(ratio=st.floats(1e-5, 0.01), J=st.floats(1.0, 1e4))
def test_transfer_first_order_decay(ratio, J):
    p = MemoryParams(gamma_p=1.0, gamma_s=ratio * J, gamma_k=0.0, J=J, C=1.0)
    assert exchange_transfer_efficiency(p) == pytest.approx(math.exp(-math.pi * ratio / 2), rel=1e-3)


# ---- scheme totals ----

def test_sequential_total_examples():
    row1 = MemoryParams(gamma_p=6e10, gamma_s=17.0, gamma_k=1 / 360000, J=1000.0, C=100.0)
    assert sequential_total_efficiency(row1, 17.0 / (1e4 - 17.0)) == pytest.approx(0.93, abs=0.01)
    p0 = FIG_P.with_(gamma_s=0.0, gamma_k=0.1)
    assert sequential_total_efficiency(p0, 0.0, 2.0) == pytest.approx((100 / 101) ** 2 * math.exp(-0.4), rel=1e-15)
    assert sequential_total_efficiency(FIG_P, 1e-3) == pytest.approx(0.94807981, abs=1e-8)
    with pytest.raises(DomainError):
        sequential_total_efficiency(FIG_P.with_(J=0.0), 1e-3)


def test_adiabatic_total_examples():
    assert adiabatic_total_efficiency(FIG_P, 1e12) == pytest.approx((100 / 101) ** 2, rel=1e-12)
    assert adiabatic_total_efficiency(FIG_P, 17.8) == pytest.approx(0.98028503, abs=1e-8)
    assert adiabatic_total_efficiency(FIG_P, 1e-4) == 0.0
    with pytest.warns(ValidityWarning):
        assert adiabatic_total_efficiency(FIG_P, 1e-5) == 0.0


@settings(max_examples=100, deadline=None)
@given(C=st.floats(0.1, 1e3), gs=st.floats(0, 100), J=st.floats(0.1, 1e3), T=st.floats(1e-3, 1e3))
def test_adiabatic_storage_and_retrieval_agree(C, gs, J, T):
    p = MemoryParams(gamma_p=1e9, gamma_s=gs, gamma_k=0.0, J=J, C=C)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        one = adiabatic_storage_efficiency(p, T)
        assert adiabatic_total_efficiency(p, T) == pytest.approx(one * one, rel=1e-14, abs=1e-300)
    assert 0.0 <= one <= p.ceiling


def test_pumped_weight_examples():
    assert adiabatic_pumped_efficiency(100, 15.0, 1.0, 3.2, 0.0) == pytest.approx(0.861588, abs=1e-6)
    assert adiabatic_pumped_efficiency(60, 15.0, 1.0, 0.17, 0.0) == pytest.approx(0.850326, abs=1e-6)
    assert adiabatic_pumped_efficiency(100, 50.0, 1.0, 0.35, 0.0) == pytest.approx(0.942230, abs=1e-6)
    assert adiabatic_pumped_efficiency(100, 15.0, 1.0, 3.2, 0.044) == pytest.approx((100 / 101 * 15 / 16 * 3.2 / 3.244) ** 2, rel=1e-14)
    assert adiabatic_pumped_efficiency(100, 0.0, 1.0, 3.2, 0.0) == 0.0
    with pytest.raises(DomainError):
        adiabatic_pumped_efficiency(100, -1.0, 1.0, 3.2, 0.0)


# ---- adiabatic noble-gas solution ----

def test_adiabatic_free_decay():
    p = FIG_P.with_(gamma_k=0.2)
    grid = TimeGrid(0.0, 1.0, 100)
    t = grid.times
    w = np.sqrt(2e4 * (1 + 0.5 * np.sin(3 * t)))
    ctrl = ControlWaveform(w, np.zeros_like(t), np.zeros_like(t))
    K = adiabatic_K_solution(p, ctrl, SignalEnvelope.zero(grid), grid, K0=0.8)
    gJ = p.J**2 / (w**2 + p.gamma_s)
    steps = 0.5 * (gJ[:-1] + gJ[1:]) * grid.dt
    expo = np.concatenate([[0.0], np.cumsum(steps)]) + p.gamma_k * t
    assert np.allclose(np.abs(K) ** 2, 0.64 * np.exp(-2 * expo), rtol=1e-12, atol=0)


def test_adiabatic_solution_matches_integration():
    T = 17.8
    grid, _ = storage_grid(ScheduleSpec(T, T), steps_per_T=2000)
    sig = make_exponential_signal(T, grid)
    ctrl = ControlWaveform.constant(grid, math.sqrt(FIG_P.J**2 * T - FIG_P.gamma_s))
    K = adiabatic_K_solution(FIG_P, ctrl, sig, grid)
    tr = integrate(FIG_P, ctrl, sig, grid)
    assert abs(abs(K[-1]) ** 2 - abs(tr.K[-1]) ** 2) <= 1e-3
    # Matched filter on a pulse truncated at -2T.
    ref = adiabatic_storage_efficiency(FIG_P, T) * (1 - math.exp(-6.0))
    assert abs(K[-1]) ** 2 == pytest.approx(ref, abs=1e-5)


def test_adiabatic_solution_flags_slow_control():
    grid = TimeGrid(0.0, 1.0, 10)
    with pytest.warns(ValidityWarning):
        adiabatic_K_solution(FIG_P, ControlWaveform.constant(grid, 10.0), SignalEnvelope.zero(grid), grid)


# ---- transfer inequality ----

def test_transfer_inequality_zero_control():
    grid = TimeGrid(-2.0, 1.0, 30)
    assert transfer_inequality_check(ControlWaveform.constant(grid, 0.0), FIG_P, grid) == 0.0


def test_transfer_inequality_matched_control():
    T = 17.8
    w = math.sqrt(FIG_P.J**2 * T - FIG_P.gamma_s)
    grid = TimeGrid(-2 * T, T, 6000)
    assert transfer_inequality_check(ControlWaveform.constant(grid, w), FIG_P, grid) == pytest.approx(
        1 - math.exp(-6.0), rel=1e-9)
    long = TimeGrid(-10 * T, T, 20000)
    assert abs(transfer_inequality_check(ControlWaveform.constant(long, w), FIG_P, long) - 1.0) < 1e-3


@settings(max_examples=40, deadline=None)
@given(amps=st.lists(st.floats(0, 3e3), min_size=6, max_size=6), gk=st.floats(0, 5), gs=st.floats(0, 50),
       J=st.floats(0.1, 300))
@example(amps=[0.0] * 5 + [2.5e-158], gk=0.0, gs=2.0, J=6.0)
def test_transfer_inequality_bounded(amps, gk, gs, J):
    p = MemoryParams(gamma_p=1e9, gamma_s=gs, gamma_k=gk, J=J, C=30.0)
    grid = TimeGrid(-2.0, 1.0, 300)
    w = np.interp(grid.times, np.linspace(-2, 1, 6), amps)
    if gs == 0:
        w = w + 1.0
    val = transfer_inequality_check(ControlWaveform(w, np.zeros_like(w), np.zeros_like(w)), p, grid)
    assert 0.0 <= val <= 1.0 + 1e-9
