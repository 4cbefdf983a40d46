"""Fractional cosine, sine and Riemann-Liouville families of a bounded operator.

For a matrix ``A`` and order ``1 < alpha <= 2``

* ``C_alpha(t; A) = E_{alpha,1}(A t**alpha)``
* ``S_alpha(t; A) = t E_{alpha,2}(A t**alpha)``, the time integral of ``C_alpha``
* ``T_alpha(t; A) = t**(alpha-1) E_{alpha,alpha}(A t**alpha) = I^{alpha-1} C_alpha``

The scalar functions are Mittag-Leffler series evaluated on the matrix
argument, so no diagonalisation is needed.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import rgamma

from .grid import TimeGrid, Trajectory
from .mlfunc import as_alpha, g_kernel, ml_matrix, ml_matrix_grid
from .operators import GrowthEnvelope, as_matrix

__all__ = [
    "cosine_family", "sine_family", "rl_family", "rl_family_derivative",
    "cosine_family_grid", "sine_family_grid", "rl_family_grid", "rl_kernel_table",
    "estimate_envelope", "check_envelope",
]


def _check_t(t, strict=False):
    t = float(t)
    if t < 0 or (strict and t == 0):
        raise ValueError(f"time must be {'positive' if strict else 'non-negative'}, got {t!r}")
    return t


def cosine_family(alpha, A, t, **ml_kw) -> np.ndarray:
    """``C_alpha(t; A) = E_{alpha,1}(A t**alpha)``; the identity at ``t = 0``."""
    a = as_alpha(alpha)
    A = as_matrix(A)
    t = _check_t(t)
    return ml_matrix(a, 1.0, A, t**a, **ml_kw)


def sine_family(alpha, A, t, **ml_kw) -> np.ndarray:
    """``S_alpha(t; A) = t E_{alpha,2}(A t**alpha)``; zero at ``t = 0``."""
    a = as_alpha(alpha)
    A = as_matrix(A)
    t = _check_t(t)
    return t * ml_matrix(a, 2.0, A, t**a, **ml_kw)


def rl_family(alpha, A, t, **ml_kw) -> np.ndarray:
    """``T_alpha(t; A) = t**(alpha-1) E_{alpha,alpha}(A t**alpha)``.

    Coincides with :func:`sine_family` at ``alpha = 2``. The value at
    ``t = 0`` is the (zero) limit.
    """
    a = as_alpha(alpha)
    A = as_matrix(A)
    t = _check_t(t)
    return t ** (a - 1.0) * ml_matrix(a, a, A, t**a, **ml_kw)


def rl_family_derivative(alpha, A, t, form="closed", **ml_kw) -> np.ndarray:
    """Time derivative of the Riemann-Liouville family.

    Parameters
    ----------
    form : {"closed", "convolution"}
        ``"closed"`` evaluates ``t**(alpha-2) E_{alpha,alpha-1}(A t**alpha)``.
        ``"convolution"`` evaluates ``(g_{alpha-1} * A T_alpha)(t) + g_{alpha-1}(t) I``
        entrywise with an algebraic-weight adaptive quadrature, which handles
        the ``(t-s)**(alpha-2)`` endpoint singularity exactly. It is slow and
        meant for cross-checking.
    """
    a = as_alpha(alpha)
    A = as_matrix(A)
    t = _check_t(t, strict=a < 2)
    n = A.shape[0]
    if form == "closed":
        if t == 0.0:  # alpha == 2
            return np.eye(n)
        return t ** (a - 2.0) * ml_matrix(a, a - 1.0, A, t**a, **ml_kw)
    if form != "convolution":
        raise ValueError(f"unknown form {form!r}")
    if t == 0.0:
        return np.eye(n)

    cache = {}

    def smooth(s):
        # A T_alpha(s) / (s**(alpha-1) Gamma(alpha-1)), the weights are handled by quad
        if s not in cache:
            cache[s] = A @ ml_matrix(a, a, A, s**a, **ml_kw) * rgamma(a - 1.0)
        return cache[s]

    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            val, _ = quad(lambda s: smooth(s)[i, j], 0.0, t, weight="alg",
                          wvar=(a - 1.0, a - 2.0), epsabs=1e-14, epsrel=1e-13, limit=200)
            out[i, j] = val
    return out + g_kernel(a - 1.0, t) * np.eye(n)


# ------------------------------------------------------------------ grid forms

def cosine_family_grid(alpha, A, grid: TimeGrid, **ml_kw) -> Trajectory:
    a = as_alpha(alpha)
    t = grid.nodes
    return Trajectory(grid, ml_matrix_grid(a, 1.0, as_matrix(A), t**a, **ml_kw))


def sine_family_grid(alpha, A, grid: TimeGrid, **ml_kw) -> Trajectory:
    a = as_alpha(alpha)
    t = grid.nodes
    vals = ml_matrix_grid(a, 2.0, as_matrix(A), t**a, **ml_kw)
    return Trajectory(grid, t[:, None, None] * vals)


def rl_kernel_table(alpha, A, grid: TimeGrid, **ml_kw) -> np.ndarray:
    """``E_{alpha,alpha}(A t_m**alpha)`` at the grid offsets, the smooth factor of ``T_alpha``."""
    a = as_alpha(alpha)
    return ml_matrix_grid(a, a, as_matrix(A), grid.nodes**a, **ml_kw)


def rl_family_grid(alpha, A, grid: TimeGrid, **ml_kw) -> Trajectory:
    a = as_alpha(alpha)
    t = grid.nodes
    return Trajectory(grid, (t ** (a - 1.0))[:, None, None] * rl_kernel_table(a, A, grid, **ml_kw))


# -------------------------------------------------------------------- envelope

def _omega_guess(alpha, A):
    """Largest growth rate ``Re(lambda**(1/alpha))`` over the eigenvalues
    with ``|arg lambda| < alpha pi / 2``; the others only produce decaying
    or polynomially bounded contributions."""
    omega = 0.0
    for lam in np.linalg.eigvals(A):
        lam = complex(lam)
        if lam == 0:
            continue
        if abs(cmath.phase(lam)) < alpha * math.pi / 2:
            omega = max(omega, (lam ** (1.0 / alpha)).real)
    return omega


def estimate_envelope(alpha, A, grid: TimeGrid, omega=None) -> GrowthEnvelope:
    """Growth constants ``(M, omega)`` for ``C_alpha(.; A)`` on the grid.

    ``omega`` defaults to the spectral guess of :func:`_omega_guess`; ``M``
    is then the smallest constant making the envelope hold at every node,
    clamped to at least 1.
    """
    a = as_alpha(alpha)
    A = as_matrix(A)
    if omega is None:
        omega = _omega_guess(a, A)
    C = cosine_family_grid(a, A, grid).values
    norms = np.linalg.norm(C, ord=2, axis=(1, 2))
    M = float(np.max(norms * np.exp(-omega * grid.nodes)))
    # a few ulps of slack so that the defining inequality survives rounding
    return GrowthEnvelope(M=max(1.0, M * (1 + 1e-12)), omega=float(omega))


def check_envelope(alpha, A, grid: TimeGrid, env: GrowthEnvelope):
    """Return the nodes where ``||C_alpha(t; A)|| > M exp(omega t)``."""
    C = cosine_family_grid(alpha, A, grid).values
    norms = np.linalg.norm(C, ord=2, axis=(1, 2))
    return np.flatnonzero(norms > env(grid.nodes) * (1 + 1e-12))
