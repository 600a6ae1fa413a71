"""Complex dense linear algebra and cylindrical Bessel/Hankel functions.

Matrices are plain ``numpy`` ``complex128`` arrays of shape ``(rows, cols)``.
Bessel functions of order 0 and 1 are evaluated with the convergent power
series below ``SERIES_CUTOFF`` and the Hankel asymptotic expansion above it;
both branches are accurate to ~1e-12 absolute over (0, 500].
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

EULER_GAMMA = 0.57721566490153286061

SERIES_CUTOFF = 12.0
_SERIES_TERMS = 40
_ASYMPTOTIC_TERMS = 20

# Condition estimate beyond which a system is treated as singular.
MAX_CONDITION = 1e14


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Matrix is singular to working precision."""


# ---------------------------------------------------------------------------
# Bessel functions
# ---------------------------------------------------------------------------

def _harmonic(n: int) -> float:
    return math.fsum(1.0 / j for j in range(1, n + 1))


def _psi(n: int) -> float:
    # digamma at a positive integer
    return -EULER_GAMMA + _harmonic(n - 1)


# Series coefficients c_k = (-1)^k / (k! (n+k)!) and the Y-series weights
# psi(k+1) + psi(n+k+1), precomputed for n = 0, 1.
_J_COEF = {
    n: np.array([(-1.0) ** k / (math.factorial(k) * math.factorial(n + k))
                 for k in range(_SERIES_TERMS)])
    for n in (0, 1)
}
_Y_PSI = {
    n: np.array([_psi(k + 1) + _psi(n + k + 1) for k in range(_SERIES_TERMS)])
    for n in (0, 1)
}


def _series_jy(order: int, x: np.ndarray, want_y: bool):
    """Power series for J_n and Y_n, n in {0, 1} (A&S 9.1.10, 9.1.11)."""
    q = 0.25 * x * x
    half = 0.5 * x
    # Horner evaluation of sum c_k q^k
    jsum = np.zeros_like(x)
    ysum = np.zeros_like(x)
    for k in range(_SERIES_TERMS - 1, -1, -1):
        jsum = jsum * q + _J_COEF[order][k]
        if want_y:
            ysum = ysum * q + _J_COEF[order][k] * _Y_PSI[order][k]
    pre = half ** order
    j = pre * jsum
    if not want_y:
        return j, None
    with np.errstate(divide="ignore"):
        y = (2.0 / math.pi) * np.log(half) * j - (1.0 / math.pi) * pre * ysum
        if order == 1:
            y = y - 2.0 / (math.pi * x)
    return j, y


def _asymptotic_coefs(order: int) -> np.ndarray:
    mu = 4.0 * order * order
    coefs = [1.0]
    for k in range(1, _ASYMPTOTIC_TERMS):
        coefs.append(coefs[-1] * (mu - (2 * k - 1) ** 2) / (k * 8.0))
    return np.array(coefs)


_ASYM = {n: _asymptotic_coefs(n) for n in (0, 1)}


def _asymptotic_jy(order: int, x: np.ndarray):
    """Hankel expansion H_n(x) ~ sqrt(2/(pi x)) e^{i chi} sum_k i^k a_k x^-k."""
    a = _ASYM[order]
    inv = 1.0 / x
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    power = np.ones_like(x)
    for k in range(_ASYMPTOTIC_TERMS):
        term = a[k] * power
        r = k % 4
        if r == 0:
            p = p + term
        elif r == 1:
            q = q + term
        elif r == 2:
            p = p - term
        else:
            q = q - term
        power = power * inv
    chi = x - (0.25 + 0.5 * order) * math.pi
    amp = np.sqrt(2.0 / (math.pi * x))
    c, s = np.cos(chi), np.sin(chi)
    return amp * (p * c - q * s), amp * (p * s + q * c)


def _jy(order: int, x, want_y: bool):
    if order not in (0, 1):
        raise ValueError(f"only orders 0 and 1 are supported, got {order}")
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Bessel argument must be finite")
    if want_y and np.any(arr <= 0):
        raise DomainError("Y_n(x) requires x > 0")
    if np.any(arr < 0):
        raise DomainError("J_n(x) requires x >= 0")
    flat = np.atleast_1d(arr).ravel()
    j = np.empty_like(flat)
    y = np.empty_like(flat) if want_y else None
    small = flat < SERIES_CUTOFF
    if np.any(small):
        js, ys = _series_jy(order, flat[small], want_y)
        j[small] = js
        if want_y:
            y[small] = ys
    if np.any(~small):
        ja, ya = _asymptotic_jy(order, flat[~small])
        j[~small] = ja
        if want_y:
            y[~small] = ya
    j = j.reshape(arr.shape)
    if want_y:
        y = y.reshape(arr.shape)
    return j, y


def bessel(order: int, kind: str, x):
    """Bessel function J_n or Y_n of order 0 or 1.

    Accepts a scalar or an array; returns the same shape (a Python float for
    scalar input).
    """
    if kind not in ("J", "Y"):
        raise ValueError(f"kind must be 'J' or 'Y', got {kind!r}")
    j, y = _jy(order, x, want_y=(kind == "Y"))
    out = j if kind == "J" else y
    return float(out) if np.ndim(out) == 0 else out


def hankel1(order: int, x):
    """Hankel function of the first kind, H_n^(1)(x) = J_n(x) + i Y_n(x)."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0):
        raise DomainError("H_n^(1)(x) requires x > 0")
    j, y = _jy(order, arr, want_y=True)
    out = j + 1j * y
    return complex(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Dense complex matrices
# ---------------------------------------------------------------------------

def as_cmatrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    return m


def gemm(a, b) -> np.ndarray:
    a, b = as_cmatrix(a), as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a, b = as_cmatrix(a), as_cmatrix(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def scale(a, c: complex) -> np.ndarray:
    return complex(c) * as_cmatrix(a)


def ctranspose(a) -> np.ndarray:
    return as_cmatrix(a).conj().T


def frobenius(a) -> float:
    return float(np.linalg.norm(as_cmatrix(a), "fro"))


def lu_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by LU with partial pivoting.

    Raises SingularMatrixError when a pivot vanishes or the 1-norm condition
    estimate exceeds ``MAX_CONDITION``.
    """
    a, b = as_cmatrix(a), as_cmatrix(b)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"coefficient matrix must be square, got {a.shape}")
    if b.shape[0] != n:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {n}")
    anorm = np.abs(a).sum(axis=0).max()
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
        except scipy.linalg.LinAlgWarning as exc:
            raise SingularMatrixError(str(exc)) from exc
    if np.any(np.diag(lu) == 0):
        raise SingularMatrixError("zero pivot in LU factorization")
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    if info != 0 or not rcond > 1.0 / MAX_CONDITION:
        raise SingularMatrixError(f"matrix is singular to working precision (rcond={rcond:.3e})")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
