"""Hot O(N^2) loops, each in a numba and a pure-numpy flavour.

The backend is chosen once at import time: numba when it is importable and
``FRACEVO_DISABLE_NUMBA`` is not set to a truthy value, numpy otherwise.
:func:`set_backend` switches it at runtime (benchmarks and tests use this).

Weights follow the product trapezoidal rule for a kernel ``tau**(a-1)``
on a uniform grid: ``weight(i, j) = start[i]`` for ``j == 0`` and
``toeplitz[i - j]`` otherwise, with ``toeplitz[0] = 1``; the common factor
``h**a / (a (a+1))`` is applied by the caller.
"""

from __future__ import annotations

import os

import numpy as np

_TRUTHY = {"1", "true", "yes", "on"}

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_backend = "numba" if HAVE_NUMBA and os.environ.get(
    "FRACEVO_DISABLE_NUMBA", "").strip().lower() not in _TRUTHY else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev


def product_weights(a: float, N: int):
    """Toeplitz and start weights of the product trapezoidal rule (unit step)."""
    if a <= 0:
        raise ValueError("kernel exponent must be positive")
    m = np.arange(N + 1, dtype=float)
    p = a + 1.0
    toeplitz = np.empty(N + 1)
    toeplitz[0] = 1.0
    mm = m[1:]
    toeplitz[1:] = (mm + 1.0) ** p - 2.0 * mm**p + (mm - 1.0) ** p
    start = np.zeros(N + 1)
    start[1:] = (mm - 1.0) ** p - (mm - 1.0 - a) * mm**a
    return toeplitz, start


# --------------------------------------------------------------------- numpy

def _conv_matrix_numpy(toeplitz, start, G, phi):
    N1 = phi.shape[0]
    out = np.zeros((N1, G.shape[1], phi.shape[2]))
    if N1 == 1:
        return out
    # lag m = i - j; j >= 1 use toeplitz, j == 0 uses start
    for m in range(N1 - 1):
        out[m + 1:] += toeplitz[m] * np.matmul(G[m], phi[1:N1 - m])
    out[1:] += start[1:, None, None] * np.matmul(G[1:], phi[0])
    return out


def _conv_scalar_numpy(toeplitz, start, phi):
    N1 = phi.shape[0]
    idx = np.arange(N1)
    lag = idx[:, None] - idx[None, :]
    W = np.where(lag >= 0, toeplitz[np.clip(lag, 0, N1 - 1)], 0.0)
    W[:, 0] = start
    W[0, :] = 0.0
    return W @ phi


def _adams_numpy(alpha, h, L, f, x, y, pred_w, toeplitz, start, c_pred, c_corr):
    N1, n = f.shape
    u = np.zeros((N1, n))
    F = np.zeros((N1, n))
    u[0] = x
    F[0] = L[0] @ x + f[0]
    for step in range(N1 - 1):
        i = step + 1
        base = x + (i * h) * y
        # predictor: pred_w[i-1-j] for j = 0..i-1
        pred = base + c_pred * (pred_w[i - 1::-1] @ F[:i])
        Fp = L[i] @ pred + f[i]
        w = toeplitz[i - np.arange(i)]
        w[0] = start[i]
        u[i] = base + c_corr * (Fp + w @ F[:i])
        F[i] = L[i] @ u[i] + f[i]
    return u


# --------------------------------------------------------------------- numba

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _conv_matrix_numba(toeplitz, start, G, phi):  # pragma: no cover - jitted
        N1 = phi.shape[0]
        n = G.shape[1]
        k = phi.shape[2]
        out = np.zeros((N1, n, k))
        for i in range(1, N1):
            for j in range(i + 1):
                w = start[i] if j == 0 else toeplitz[i - j]
                Gm = G[i - j]
                for a in range(n):
                    for c in range(k):
                        acc = 0.0
                        for b in range(n):
                            acc += Gm[a, b] * phi[j, b, c]
                        out[i, a, c] += w * acc
        return out

    @numba.njit(cache=True)
    def _conv_scalar_numba(toeplitz, start, phi):  # pragma: no cover - jitted
        N1, p = phi.shape
        out = np.zeros((N1, p))
        for i in range(1, N1):
            for c in range(p):
                out[i, c] += start[i] * phi[0, c]
            for j in range(1, i + 1):
                w = toeplitz[i - j]
                for c in range(p):
                    out[i, c] += w * phi[j, c]
        return out

    @numba.njit(cache=True)
    def _adams_numba(alpha, h, L, f, x, y, pred_w, toeplitz, start,
                     c_pred, c_corr):  # pragma: no cover - jitted
        N1, n = f.shape
        u = np.zeros((N1, n))
        F = np.zeros((N1, n))
        pred = np.zeros(n)
        for a in range(n):
            u[0, a] = x[a]
        for a in range(n):
            acc = f[0, a]
            for b in range(n):
                acc += L[0, a, b] * x[b]
            F[0, a] = acc
        for i in range(1, N1):
            for a in range(n):
                s = 0.0
                for j in range(i):
                    s += pred_w[i - 1 - j] * F[j, a]
                pred[a] = x[a] + i * h * y[a] + c_pred * s
            for a in range(n):
                s = start[i] * F[0, a]
                for j in range(1, i):
                    s += toeplitz[i - j] * F[j, a]
                fp = f[i, a]
                for b in range(n):
                    fp += L[i, a, b] * pred[b]
                u[i, a] = x[a] + i * h * y[a] + c_corr * (fp + s)
            for a in range(n):
                acc = f[i, a]
                for b in range(n):
                    acc += L[i, a, b] * u[i, b]
                F[i, a] = acc
        return u

else:  # pragma: no cover
    _conv_matrix_numba = _conv_scalar_numba = _adams_numba = None


# ------------------------------------------------------------------ dispatch

def conv_matrix(toeplitz, start, G, phi, backend=None):
    """``out[i] = sum_j weight(i, j) G[i-j] @ phi[j]`` for a stack of matrices."""
    G = np.ascontiguousarray(G, dtype=float)
    phi = np.ascontiguousarray(phi, dtype=float)
    if (backend or _backend) == "numba":
        return _conv_matrix_numba(toeplitz, start, G, phi)
    return _conv_matrix_numpy(toeplitz, start, G, phi)


def conv_scalar(toeplitz, start, phi, backend=None):
    """``out[i] = sum_j weight(i, j) phi[j]`` with ``phi`` of shape ``(N+1, p)``."""
    phi = np.ascontiguousarray(phi, dtype=float)
    if (backend or _backend) == "numba":
        return _conv_scalar_numba(toeplitz, start, phi)
    return _conv_scalar_numpy(toeplitz, start, phi)


def adams_pece(alpha, h, L, f, x, y, pred_w, toeplitz, start, c_pred, c_corr,
               backend=None):
    args = (float(alpha), float(h), np.ascontiguousarray(L, dtype=float),
            np.ascontiguousarray(f, dtype=float), np.asarray(x, dtype=float),
            np.asarray(y, dtype=float), pred_w, toeplitz, start,
            float(c_pred), float(c_corr))
    if (backend or _backend) == "numba":
        return _adams_numba(*args)
    return _adams_numpy(*args)
