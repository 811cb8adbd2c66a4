"""Exact step maps for the 2x2 linear system with linear forcing.

For a constant generator A and a forcing b(t) = beta (E0 + sigma t) e_0 the
solution after a step h is

    y(h) = exp(hA) y(0) + h beta [phi1(hA) E0 + phi2(hA) (E1 - E0)] e_0

with phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2. Matrix functions
of 2x2 matrices are built from the two eigenvalues through divided
differences, which stay accurate through eigenvalue coalescence and for very
stiff steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["StepMaps", "divided_difference", "phi", "step_maps"]

_TAYLOR_TERMS = 22


def _terms(radius: float) -> int:
    """Taylor terms needed for a relative tail below 1e-17 at |z| <= radius."""
    n, term = 1, radius
    while term > 1e-17 and n < _TAYLOR_TERMS + 8:
        n += 1
        term *= 2.0 * radius / n
    return n + 1


def phi(p: int, z: np.ndarray) -> np.ndarray:
    """phi_p(z) = sum_k z^k / (k + p)!, with phi_0 = exp."""
    z = np.asarray(z, dtype=complex)
    if p == 0:
        return np.exp(z)
    small = np.abs(z) < 1.0
    out = np.empty_like(z)
    if np.any(small):
        zs = z[small]
        acc = np.zeros_like(zs)
        for k in range(min(_terms(float(np.max(np.abs(zs)))), _TAYLOR_TERMS), -1, -1):
            acc = acc * zs + 1.0 / math.factorial(k + p)
        out[small] = acc
    big = ~small
    if np.any(big):
        zb = z[big]
        val = np.exp(zb)
        for q in range(1, p + 1):
            val = (val - 1.0 / math.factorial(q - 1)) / zb
        out[big] = val
    return out


def divided_difference(p: int, z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """(phi_p(z1) - phi_p(z2)) / (z1 - z2), continuous at z1 = z2.

    Requires re(z1) <= re(z2) for the exponential case.
    """
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    z1, z2 = np.broadcast_arrays(z1, z2)
    delta = z1 - z2
    dd = np.exp(z2) * phi(1, delta)
    if p == 0:
        return dd
    out = np.empty(z1.shape, dtype=complex)
    far = np.abs(delta) >= 0.5
    if np.any(far):
        out[far] = (phi(p, z1[far]) - phi(p, z2[far])) / delta[far]
    # Leibniz rule on phi_p = (phi_{p-1} - 1/(p-1)!) / z.
    big = ~far & (np.abs(z2) >= 1.0)
    if np.any(big):
        a, b, d = z1[big], z2[big], dd[big]
        for q in range(1, p + 1):
            d = (d - phi(q, a)) / b
        out[big] = d
    small = ~far & ~big
    if np.any(small):
        a, b = z1[small], z2[small]
        # f[a, b] = sum_k h_{k-1}(a, b) / (k + p)!, h complete homogeneous.
        h = np.ones_like(a)
        bk = np.ones_like(a)
        acc = h / math.factorial(1 + p)
        for k in range(2, _terms(float(max(np.max(np.abs(a)), np.max(np.abs(b))))) + 2):
            bk = bk * b
            h = a * h + bk
            acc = acc + h / math.factorial(k + p)
        out[small] = acc
    return out


@dataclass(frozen=True, eq=False)
class StepMaps:
    """Per-step propagator ``U`` and forcing columns ``W1``, ``W2``.

    ``U`` has shape (n, 2, 2); ``W1`` and ``W2`` hold h phi_k(hA) e_0 with
    shape (n, 2).
    """

    U: np.ndarray
    W1: np.ndarray
    W2: np.ndarray


def step_maps(a00: np.ndarray, a11: np.ndarray, coupling: complex, h: float) -> StepMaps:
    """Step maps for generators [[a00, c], [c, a11]] held over a step h."""
    a00 = np.asarray(a00, dtype=complex) * h
    a11 = np.asarray(a11, dtype=complex) * h
    c = complex(coupling) * h
    half_tr = 0.5 * (a00 + a11)
    half_diff = 0.5 * (a00 - a11)
    root = np.sqrt(half_diff * half_diff + c * c)
    lam_a = half_tr + root
    lam_b = half_tr - root
    big = np.where(np.abs(lam_a) >= np.abs(lam_b), lam_a, lam_b)
    det = a00 * a11 - c * c
    with np.errstate(invalid="ignore", divide="ignore"):
        other = np.where(big != 0, det / np.where(big != 0, big, 1.0), 0.0)
    # z2 carries the larger real part so exp(z2) * phi1(z1 - z2) cannot overflow.
    swap = big.real > other.real
    z2 = np.where(swap, big, other)
    z1 = np.where(swap, other, big)
    n = a00.shape[0]
    U = np.empty((n, 2, 2), dtype=complex)
    f0 = np.exp(z2)
    d0 = divided_difference(0, z1, z2)
    U[:, 0, 0] = f0 + d0 * (a00 - z2)
    U[:, 1, 1] = f0 + d0 * (a11 - z2)
    U[:, 0, 1] = d0 * c
    U[:, 1, 0] = d0 * c
    W = []
    for p in (1, 2):
        fp = phi(p, z2)
        dp = divided_difference(p, z1, z2)
        col = np.empty((n, 2), dtype=complex)
        col[:, 0] = h * (fp + dp * (a00 - z2))
        col[:, 1] = h * dp * c
        W.append(col)
    return StepMaps(U=U, W1=W[0], W2=W[1])
