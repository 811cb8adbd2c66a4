"""Spherically symmetric diffusion modes of a spherical cell.

Radial modes are j0(x r / R) with x fixed by the wall condition
R d/dr u + beta u = 0, i.e. x cos x + (beta - 1) sin x = 0. beta = 0 is the
spin-preserving (Neumann) wall of the noble gas, beta -> inf the
spin-destroying (Dirichlet) wall of the alkali atoms. Modes are normalized
over the sphere and signed to be positive at the centre.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq
from scipy.special import jv

from .errors import DomainError, NumericalError, ValidityWarning

__all__ = [
    "CellSpec",
    "ModeBasis",
    "ModeRecord",
    "build_mode_basis",
    "coupling_b",
    "dirichlet_eigenvalues",
    "gamma_diff",
    "mode_records",
    "mode_roots",
    "multimode_exchange",
    "multimode_stage2_efficiency",
    "neumann_eigenvalues",
    "overlap_matrix",
]

MAX_MODES = 64


@dataclass(frozen=True)
class CellSpec:
    """Spherical cell of radius ``R`` with diffusion coefficients and wall
    coefficients ``beta_s`` (alkali) and ``beta_k`` (noble gas)."""

    R: float
    D_a: float
    D_b: float
    n_modes: int = 16
    beta_s: float = math.inf
    beta_k: float = 0.0

    def __post_init__(self) -> None:
        if not self.R > 0:
            raise DomainError("R must be > 0")
        if self.D_a < 0 or self.D_b < 0:
            raise DomainError("diffusion coefficients must be >= 0")
        if int(self.n_modes) != self.n_modes or not 1 <= self.n_modes <= MAX_MODES:
            raise DomainError(f"n_modes must be an integer in [1, {MAX_MODES}]")
        if self.beta_s < 0 or self.beta_k < 0:
            raise DomainError("wall coefficients must be >= 0")

    @property
    def diffusion_unit(self) -> float:
        """pi^2 / R^2, the scale of the normalized eigenvalues."""
        return math.pi**2 / self.R**2


def mode_roots(beta: float, n: int) -> np.ndarray:
    """First ``n`` nonnegative roots of x cos x + (beta - 1) sin x."""
    if n < 1 or n > MAX_MODES:
        raise DomainError(f"n must lie in [1, {MAX_MODES}]")
    if beta < 0:
        raise DomainError("beta must be >= 0")
    if math.isinf(beta):
        return math.pi * np.arange(1, n + 1, dtype=float)
    roots = np.empty(n)
    eps = 1e-12
    for m in range(n):
        if m == 0:
            if beta == 0:
                roots[0] = 0.0
                continue
            f = lambda x: x / math.tan(x) + beta - 1.0  # noqa: E731
            lo, hi = eps, math.pi - eps
        else:
            f = lambda x: x * math.cos(x) + (beta - 1.0) * math.sin(x)  # noqa: E731
            lo, hi = m * math.pi, (m + 1) * math.pi
        try:
            roots[m] = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        except ValueError as exc:
            raise NumericalError(f"root {m} not bracketed for beta={beta!r}") from exc
    return roots


def dirichlet_eigenvalues(cell: CellSpec, gamma_s: float) -> np.ndarray:
    """Alkali mode rates gamma_s + D_a (x_m / R)^2 for the cell's alkali wall."""
    x = mode_roots(cell.beta_s, cell.n_modes)
    return gamma_s + cell.D_a * (x / cell.R) ** 2


def neumann_eigenvalues(cell: CellSpec, gamma_k: float) -> np.ndarray:
    """Noble-gas mode rates gamma_k + D_b (x_n / R)^2 for the cell's noble-gas wall."""
    x = mode_roots(cell.beta_k, cell.n_modes)
    return gamma_k + cell.D_b * (x / cell.R) ** 2


def _j0(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)


def _radial_rule(n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] fine enough for products of two modes."""
    n = max(96, 8 * n_modes + 64)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _modes(roots: np.ndarray, xi: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Mode values at radii ``xi`` (unit sphere), rows normalized so that
    4 pi integral xi^2 u^2 = 1."""
    u = _j0(np.outer(roots, xi))
    norm2 = 4.0 * math.pi * (u * u) @ (w * xi * xi)
    return u / np.sqrt(norm2)[:, None]


def overlap_matrix(cell: CellSpec) -> np.ndarray:
    """c[m, n]: overlap of alkali mode m with noble-gas mode n over the sphere."""
    xi, w = _radial_rule(cell.n_modes)
    u = _modes(mode_roots(cell.beta_s, cell.n_modes), xi, w)
    v = _modes(mode_roots(cell.beta_k, cell.n_modes), xi, w)
    return 4.0 * math.pi * (u * (w * xi * xi)) @ v.T


def _sphere_average_series(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """J0(a) + 2 sum_k (-1)^k J_2k(a) / (1 - 4k^2), the average of exp(i a cos theta)."""
    total = jv(0, a)
    k = 1
    while True:
        term = 2.0 * (-1) ** k * jv(2 * k, a) / (1.0 - 4.0 * k * k)
        total = total + term
        if k > 2 and np.max(np.abs(term)) < tol and 2 * k > np.max(a):
            return total
        k += 1
        if k > 10_000:
            raise NumericalError("Bessel series did not converge")


def coupling_b(cell: CellSpec, dk_R: float) -> np.ndarray:
    """Optical mode-matching b_m of each alkali mode for a wave-vector
    mismatch (k_signal - k_control) R between signal and control."""
    if dk_R < 0 or not math.isfinite(dk_R):
        raise DomainError("dk_R must be finite and >= 0")
    xi, w = _radial_rule(cell.n_modes)
    if dk_R > 0:
        n_extra = int(4 * dk_R)
        if n_extra > 0:
            x2, w2 = np.polynomial.legendre.leggauss(len(xi) + n_extra)
            xi, w = 0.5 * (x2 + 1.0), 0.5 * w2
    u = _modes(mode_roots(cell.beta_s, cell.n_modes), xi, w)
    avg = _sphere_average_series(dk_R * xi) if dk_R > 0 else np.ones_like(xi)
    uniform = math.sqrt(3.0 / (4.0 * math.pi))
    return 4.0 * math.pi * uniform * (u * (w * xi * xi * avg)) @ np.ones_like(xi)


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Mode rates, the alkali/noble-gas overlap matrix and optical coupling."""

    gamma_s_modes: np.ndarray
    gamma_k_modes: np.ndarray
    c: np.ndarray
    b: np.ndarray
    cell: CellSpec | None = None

    def __post_init__(self) -> None:
        n = len(self.gamma_s_modes)
        if len(self.gamma_k_modes) != n or np.shape(self.c) != (n, n) or len(self.b) != n:
            raise DomainError("basis arrays have inconsistent sizes")

    @property
    def n(self) -> int:
        return len(self.gamma_s_modes)

    @property
    def truncation_defect(self) -> float:
        """1 - sum_n |c_0n|^2: weight of the uniform alkali mode lost to truncation."""
        return float(1.0 - np.sum(np.abs(self.c[0]) ** 2))

    @property
    def unitarity_defect(self) -> float:
        """max |c^T c - I|; shrinks as modes are added."""
        return float(np.max(np.abs(self.c.T @ self.c - np.eye(self.n))))


def build_mode_basis(cell: CellSpec, gamma_s: float, gamma_k: float, dk_R: float = 0.0) -> ModeBasis:
    return ModeBasis(
        dirichlet_eigenvalues(cell, gamma_s),
        neumann_eigenvalues(cell, gamma_k),
        overlap_matrix(cell),
        coupling_b(cell, dk_R),
        cell,
    )


def gamma_diff(basis: ModeBasis, gamma_Omega: float, gamma_s: float, gamma_E: float | None = None) -> float:
    """Single effective diffusion rate of the uniform alkali mode.

    -gamma_E ln sum_m |c_m0|^2 exp((gamma_Omega + gamma_s - g_m) / gamma_E),
    where g_m = gamma_m + gamma_Omega is the rate of alkali mode m under the
    control, so only the diffusion part of each mode enters. Long coupling
    durations (small gamma_E) tend to the lowest mode's diffusion rate.
    ``gamma_E`` defaults to gamma_Omega + gamma_s.
    """
    if gamma_E is None:
        gamma_E = gamma_Omega + gamma_s
    if not gamma_E > 0:
        raise DomainError("gamma_E must be > 0")
    w = np.abs(basis.c[:, 0]) ** 2
    if float(np.sum(w)) < 0.99:
        warnings.warn(
            f"truncated basis keeps only {np.sum(w):.4f} of the uniform noble-gas mode",
            ValidityWarning, stacklevel=2,
        )
    expo = (gamma_s - np.asarray(basis.gamma_s_modes)) / gamma_E
    top = float(np.max(expo))
    return -gamma_E * (top + math.log(float(np.sum(w * np.exp(expo - top)))))


def _multimode_generator(basis: ModeBasis, J: float, delta_s: float, delta_k: float) -> np.ndarray:
    n = basis.n
    G = np.zeros((2 * n, 2 * n), complex)
    G[:n, :n] = -np.diag(np.asarray(basis.gamma_s_modes) + 1j * delta_s)
    G[n:, n:] = -np.diag(np.asarray(basis.gamma_k_modes) + 1j * delta_k)
    G[:n, n:] = -1j * J * basis.c
    G[n:, :n] = -1j * J * basis.c.T
    return G


def multimode_exchange(basis: ModeBasis, J: float, delta_s: float, delta_k: float, duration: float,
                       init: np.ndarray) -> np.ndarray:
    """Evolve (S_0..S_{n-1}, K_0..K_{n-1}) through a control-free exchange window."""
    if duration < 0:
        raise DomainError("duration must be >= 0")
    init = np.asarray(init, dtype=complex)
    if init.shape != (2 * basis.n,):
        raise DomainError(f"init must have length {2 * basis.n}")
    Psi = expm(_multimode_generator(basis, J, delta_s, delta_k) * duration)
    if not np.all(np.isfinite(Psi)):
        raise NumericalError("matrix exponential is not finite")
    return Psi @ init


def multimode_stage2_efficiency(basis: ModeBasis, J: float) -> float:
    """sum_m |c_0m|^2 exp(-gamma_m pi / (2 J)) over the truncated basis."""
    if not J > 0:
        raise DomainError("J must be > 0")
    w = np.abs(basis.c[0, :]) ** 2
    return float(np.sum(w * np.exp(-np.asarray(basis.gamma_s_modes) * math.pi / (2.0 * J))))


@dataclass(frozen=True)
class ModeRecord:
    index: int
    alkali_normalized: float
    noble_normalized: float
    b: float
    overlaps: tuple[float, ...]


def mode_records(cell: CellSpec) -> list[ModeRecord]:
    """Normalized eigenvalues, b and overlap rows, one record per mode index."""
    xs = mode_roots(cell.beta_s, cell.n_modes) / math.pi
    xk = mode_roots(cell.beta_k, cell.n_modes) / math.pi
    c = overlap_matrix(cell)
    b = coupling_b(cell, 0.0)
    return [
        ModeRecord(m, float(xs[m] ** 2), float(xk[m] ** 2), float(b[m]), tuple(float(v) for v in c[m]))
        for m in range(cell.n_modes)
    ]
