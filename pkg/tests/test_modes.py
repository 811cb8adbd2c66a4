import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from spinvault.analytic import exchange_propagator
from spinvault.errors import DomainError, ValidityWarning
from spinvault.model import MemoryParams
from spinvault.modes import (
    CellSpec,
    ModeBasis,
    build_mode_basis,
    coupling_b,
    dirichlet_eigenvalues,
    gamma_diff,
    mode_records,
    mode_roots,
    multimode_exchange,
    multimode_stage2_efficiency,
    neumann_eigenvalues,
    overlap_matrix,
)

CELL7 = CellSpec(R=1.0, D_a=1.0, D_b=1.0, n_modes=7)

# Overlaps between the first seven alkali (rows) and noble-gas (columns) modes
# of an uncoated sphere. The printed table lists c_22 and c_23 as 0.0647 and
# 0.0627; those two are corrected here to 0.647 and 0.627.
C_TABLE = np.array([
    [0.780, 0.609, -0.126, 0.058, -0.033, 0.022, -0.016],
    [-0.390, 0.652, 0.622, -0.158, 0.079, -0.049, 0.033],
    [0.260, -0.275, 0.647, 0.627, -0.173, 0.091, -0.058],
    [-0.195, 0.182, -0.256, 0.644, 0.629, -0.181, 0.098],
    [0.156, -0.139, 0.168, -0.246, 0.643, 0.631, -0.187],
    [-0.130, 0.112, -0.128, 0.159, -0.239, 0.642, 0.632],
    [0.111, -0.095, 0.104, -0.121, 0.154, -0.235, 0.641],
])
NEUMANN_TABLE = [0.0, 2.05, 6.05, 12.05, 20.05, 30.05, 42.05]


def j0(x):
    return math.sin(x) / x if x != 0 else 1.0


def radial_norm(x):
    return math.sqrt(4 * math.pi * quad(lambda r: r * r * j0(x * r) ** 2, 0, 1, epsabs=1e-14, limit=200)[0])


def quad_overlap(xa, xb):
    f = lambda r: r * r * j0(xa * r) * j0(xb * r)  # noqa: E731
    return 4 * math.pi * quad(f, 0, 1, epsabs=1e-14, limit=200)[0] / (radial_norm(xa) * radial_norm(xb))


# ---- eigenvalues ----

def test_dirichlet_normalized_eigenvalues():
    rates = dirichlet_eigenvalues(CELL7, 2.0)
    assert np.allclose((rates - 2.0) / CELL7.diffusion_unit, [1, 4, 9, 16, 25, 36, 49], rtol=1e-14)
    assert np.all(dirichlet_eigenvalues(CellSpec(1.0, 0.0, 1.0, 5), 2.0) == 2.0)


def test_neumann_normalized_eigenvalues():
    rates = neumann_eigenvalues(CELL7, 0.5)
    norm = (rates - 0.5) / CELL7.diffusion_unit
    assert norm[0] == 0.0
    assert np.allclose(norm, NEUMANN_TABLE, atol=0.005)
    assert mode_roots(0.0, 2)[1] == pytest.approx(4.493409457909064, abs=1e-12)


def test_eigenvalues_scale_with_radius_and_diffusion():
    cell = CellSpec(R=0.01, D_a=3e-5, D_b=2e-5, n_modes=4)
    assert dirichlet_eigenvalues(cell, 0.0)[0] == pytest.approx(3e-5 * math.pi**2 / 1e-4, rel=1e-14)
    assert neumann_eigenvalues(cell, 0.0)[1] == pytest.approx(2e-5 * 4.493409457909064**2 / 1e-4, rel=1e-12)


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0, 2.0, 50.0, 1e9])
def test_robin_roots_solve_boundary_condition(beta):
    x = mode_roots(beta, 12)
    assert np.all(np.diff(x) > 0)
    res = x * np.cos(x) + (beta - 1.0) * np.sin(x)
    assert np.max(np.abs(res)) < 1e-11 * np.max(x) * max(1.0, beta)
    if beta == 1.0:
        assert np.allclose(x, (np.arange(12) + 0.5) * math.pi, rtol=1e-14)


def test_robin_roots_interpolate_between_walls():
    n = 6
    lo, hi = mode_roots(0.0, n), mode_roots(math.inf, n)
    for beta in (0.5, 5.0, 1e4):
        x = mode_roots(beta, n)
        assert np.all(lo <= x) and np.all(x <= hi)
    assert np.allclose(mode_roots(1e9, n), hi, rtol=1e-8)


def test_eigenvalue_sequences_increase():
    cell = CellSpec(R=1.0, D_a=1.0, D_b=1.0, n_modes=64)
    assert np.all(np.diff(dirichlet_eigenvalues(cell, 0.0)) > 0)
    assert np.all(np.diff(neumann_eigenvalues(cell, 0.0)) > 0)


# ---- overlaps ----

def test_overlaps_match_table():
    assert np.max(np.abs(overlap_matrix(CELL7) - C_TABLE)) <= 1e-3
    c = overlap_matrix(CELL7)
    assert c[0, 0] == pytest.approx(0.780, abs=1e-3)
    assert c[1, 1] == pytest.approx(0.652, abs=1e-3)
    assert c[6, 4] == pytest.approx(0.154, abs=1e-3)


def test_overlaps_match_adaptive_quadrature():
    c = overlap_matrix(CELL7)
    xa, xb = mode_roots(math.inf, 7), mode_roots(0.0, 7)
    ref = np.array([[quad_overlap(a, b) for b in xb] for a in xa])
    assert np.max(np.abs(c - ref)) < 1e-10


@pytest.mark.parametrize("beta", [0.0, math.inf, 3.0])
def test_mode_gram_is_identity(beta):
    x = mode_roots(beta, 7)
    G = np.array([[quad_overlap(a, b) for b in x] for a in x])
    assert np.max(np.abs(G - np.eye(7))) < 1e-8


def test_row_norms_bounded_and_defects():
    defects = []
    for n in (7, 16, 32):
        basis = build_mode_basis(CellSpec(1.0, 1.0, 1.0, n), 1.0, 0.0)
        assert np.all(np.linalg.norm(basis.c, axis=1) <= 1 + 1e-9)
        defects.append((basis.truncation_defect, basis.unitarity_defect))
    row0, unit = zip(*defects)
    assert row0[1] < 1e-3
    assert row0[0] > row0[1] > row0[2] > 0
    assert unit[0] > unit[1] > unit[2]


# ---- coupling b ----

def test_b_equals_first_overlap_column_at_zero_mismatch():
    b = coupling_b(CELL7, 0.0)
    c = overlap_matrix(CELL7)
    assert np.allclose(b, c[:, 0], atol=1e-12)
    assert b[0] == pytest.approx(0.780, abs=1e-3)
    assert b[1] == pytest.approx(-0.390, abs=1e-3)


@pytest.mark.parametrize("a", [0.5, 3.0, 10.0])
def test_b_matches_sphere_average_oracle(a):
    # The angular average of exp(i a xi cos theta) over the sphere is j0(a xi).
    b = coupling_b(CELL7, a)
    x = mode_roots(math.inf, 7)
    uniform = math.sqrt(3 / (4 * math.pi))
    ref = [4 * math.pi * uniform * quad(lambda r: r * r * j0(xm * r) * j0(a * r), 0, 1, epsabs=1e-14, limit=200)[0]
           / radial_norm(xm) for xm in x]
    assert np.max(np.abs(b - ref)) < 1e-10


def test_b_decays_with_mismatch():
    assert abs(coupling_b(CELL7, 10.0)[0]) < abs(coupling_b(CELL7, 0.0)[0])
    assert coupling_b(CELL7, 3.0)[0] == pytest.approx(0.41626616, abs=1e-8)
    with pytest.raises(DomainError):
        coupling_b(CELL7, -1.0)


# ---- gamma_diff ----

def test_gamma_diff_single_mode():
    cell = CellSpec(1.0, 0.3, 1.0, 1)
    basis = ModeBasis(dirichlet_eigenvalues(cell, 2.0), np.array([0.0]), np.eye(1), np.ones(1), cell)
    for gE in (0.1, 1.0, 100.0):
        assert gamma_diff(basis, 5.0, 2.0, gE) == pytest.approx(0.3 * math.pi**2, rel=1e-14)
    assert gamma_diff(basis, 5.0, 2.0) == pytest.approx(0.3 * math.pi**2, rel=1e-14)


def test_gamma_diff_long_coupling_limit():
    basis = build_mode_basis(CellSpec(1.0, 1.0, 1.0, 16), 1.0, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        slow = gamma_diff(basis, 0.0, 1.0, gamma_E=0.05)
        fast = gamma_diff(basis, 0.0, 1.0, gamma_E=1e3)
    assert slow == pytest.approx(math.pi**2, rel=1e-2)
    assert fast > slow


def test_gamma_diff_converges_with_modes():
    vals = []
    for n in (7, 14):
        basis = build_mode_basis(CellSpec(1.0, 1.0, 1.0, n), 1.0, 0.0)
        with pytest.warns(ValidityWarning):
            vals.append(gamma_diff(basis, 0.0, 1.0, gamma_E=math.pi**2))
    assert math.isfinite(vals[0])
    assert abs(vals[1] - vals[0]) < 0.01 * abs(vals[1])
    assert vals[1] == pytest.approx(14.65925952, abs=1e-7)


def test_gamma_diff_rejects_nonpositive_scale():
    basis = build_mode_basis(CELL7, 1.0, 0.0)
    with pytest.raises(DomainError):
        gamma_diff(basis, 0.0, 0.0)


# ---- multimode exchange ----

@settings(max_examples=30, deadline=None)
@given(gs=st.floats(0, 5), gk=st.floats(0, 2), J=st.floats(0, 200), ds=st.floats(-50, 50), dk=st.floats(-50, 50),
       t=st.floats(0, 0.1))
def test_single_mode_matches_two_level_propagator(gs, gk, J, ds, dk, t):
    basis = ModeBasis(np.array([gs]), np.array([gk]), np.eye(1), np.ones(1))
    p = MemoryParams(gamma_p=1.0, gamma_s=gs, gamma_k=gk, J=J, C=1.0)
    U = exchange_propagator(p, ds, dk, t)
    for init in (np.array([1.0, 0.0]), np.array([0.3j, 0.7])):
        assert np.max(np.abs(multimode_exchange(basis, J, ds, dk, t, init) - U @ init)) <= 1e-12


def test_multimode_without_exchange_decays_each_mode():
    basis = build_mode_basis(CELL7, 1.0, 0.2)
    init = np.arange(1, 15, dtype=complex)
    out = multimode_exchange(basis, 0.0, 0.5, -0.5, 0.3, init)
    rates = np.concatenate([basis.gamma_s_modes + 0.5j, basis.gamma_k_modes - 0.5j])
    assert np.allclose(out, init * np.exp(-rates * 0.3), rtol=1e-13)
    assert np.array_equal(multimode_exchange(basis, 50.0, 1.0, 2.0, 0.0, init), init)


def test_multimode_matches_block_generator():
    basis = build_mode_basis(CELL7, 1.0, 0.0)
    n = basis.n
    G = np.zeros((2 * n, 2 * n), complex)
    G[:n, :n] = -np.diag(basis.gamma_s_modes)
    G[n:, n:] = -np.diag(basis.gamma_k_modes)
    G[:n, n:] = -20j * basis.c
    G[n:, :n] = -20j * basis.c.T
    init = np.zeros(2 * n, complex)
    init[0] = 1.0
    assert np.allclose(multimode_exchange(basis, 20.0, 0.0, 0.0, 0.05, init), expm(G * 0.05) @ init, atol=1e-13)


def test_multimode_rejects_bad_input():
    basis = build_mode_basis(CELL7, 1.0, 0.0)
    with pytest.raises(DomainError):
        multimode_exchange(basis, 1.0, 0, 0, -1.0, np.zeros(14))
    with pytest.raises(DomainError):
        multimode_exchange(basis, 1.0, 0, 0, 1.0, np.zeros(3))


def test_stage2_limits():
    single = ModeBasis(np.array([1.0]), np.array([0.0]), np.eye(1), np.ones(1))
    assert multimode_stage2_efficiency(single, 100.0) == pytest.approx(math.exp(-math.pi / 200), rel=1e-15)
    basis = build_mode_basis(CELL7, 1.0, 0.0)
    assert multimode_stage2_efficiency(basis, 1e9) == pytest.approx(0.9996, abs=1e-4)
    assert multimode_stage2_efficiency(basis, 1e9) == pytest.approx(float(np.sum(basis.c[0] ** 2)), rel=1e-6)
    assert multimode_stage2_efficiency(basis, 1e-3) < 1e-100
    with pytest.raises(DomainError):
        multimode_stage2_efficiency(basis, 0.0)


# ---- records and validation ----

def test_mode_records():
    recs = mode_records(CELL7)
    assert [r.index for r in recs] == list(range(7))
    assert recs[3].alkali_normalized == pytest.approx(16.0, rel=1e-14)
    assert recs[1].noble_normalized == pytest.approx(2.04575, abs=1e-5)
    assert recs[0].b == pytest.approx(recs[0].overlaps[0], abs=1e-12)


@pytest.mark.parametrize("kw", [dict(R=0.0), dict(D_a=-1.0), dict(n_modes=0), dict(n_modes=65), dict(n_modes=2.5),
                                dict(beta_s=-1.0)])
def test_cell_validation(kw):
    base = dict(R=1.0, D_a=1.0, D_b=1.0)
    with pytest.raises(DomainError):
        CellSpec(**{**base, **kw})
