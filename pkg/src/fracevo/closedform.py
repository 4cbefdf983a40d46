"""Explicit bounded-operator solutions for constant ``A`` and ``B``.

The coefficients come from the word sums ``Q_{k,m}`` (all products of
``k`` factors ``A`` and ``m`` factors ``B`` in every order), built with

    Q_{k,m} = sum_{l=0}^{k} A^{k-l} B Q_{l,m-1},   Q_{k,0} = A^k,  Q_{0,m} = B^m.

The solution is then

    u(t) = sum_n P_n [ g_{n alpha + 1}(t) x + g_{n alpha + 2}(t) y ]
         + int_0^t sum_n P_n g_{n alpha + alpha}(t-s) f(s) ds,

with ``P_n = sum_{k+m=n} Q_{k,m}``. When ``AB = BA`` this collapses to
Mittag-Leffler functions of ``A + B``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import gammaln, gammasgn, rgamma

from .errors import DimensionMismatch, NonConvergence, NotPermutable
from .families import cosine_family_grid, rl_kernel_table, sine_family_grid
from .grid import TimeGrid, Trajectory
from .mlfunc import as_alpha, ml_remainder
from .operators import SeriesControl, as_forcing, as_matrix, as_vector
from .quadrature import kernel_convolution

__all__ = ["commutator", "QTable", "q_table", "clear_q_cache", "solve_nonpermutable",
           "solve_permutable", "solve_classical_nonpermutable", "solve_classical_permutable"]

TOL_COMMUTE = 1e-12


def _pair(A, B):
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape != B.shape:
        raise DimensionMismatch(f"A is {A.shape}, B is {B.shape}")
    return A, B


def commutator(A, B, tol: float = TOL_COMMUTE) -> Tuple[np.ndarray, bool]:
    """``[A, B] = AB - BA`` and whether ``||[A, B]|| <= tol ||A|| ||B||``."""
    A, B = _pair(A, B)
    K = A @ B - B @ A
    scale = np.linalg.norm(A, 2) * np.linalg.norm(B, 2)
    return K, bool(np.linalg.norm(K, 2) <= tol * scale)


@dataclass
class QTable:
    """Word sums ``Q_{k,m}`` for ``k + m <= n_max``."""

    A: np.ndarray
    B: np.ndarray
    n_max: int = -1
    entries: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    _Apow: list = field(default_factory=list, repr=False)

    def __getitem__(self, km):
        return self.entries[km]

    def extend(self, n_max: int) -> "QTable":
        """Fill all diagonals ``k + m <= n_max`` not yet present."""
        A, B = self.A, self.B
        dim = A.shape[0]
        while len(self._Apow) <= n_max:
            self._Apow.append(np.eye(dim) if not self._Apow else self._Apow[-1] @ A)
        for n in range(self.n_max + 1, n_max + 1):
            for m in range(n + 1):
                k = n - m
                if m == 0:
                    Q = self._Apow[k].copy()
                else:
                    Q = np.zeros((dim, dim))
                    for l in range(k + 1):
                        Q += self._Apow[k - l] @ B @ self.entries[(l, m - 1)]
                self.entries[(k, m)] = Q
        self.n_max = max(self.n_max, n_max)
        return self

    def diagonal_sum(self, n: int) -> np.ndarray:
        """``P_n = sum_{k+m=n} Q_{k,m}``."""
        if n > self.n_max:
            self.extend(n)
        return sum(self.entries[(n - m, m)] for m in range(n + 1))


_CACHE: Dict[bytes, QTable] = {}
_LOCK = threading.Lock()


def _key(A, B):
    return A.shape[0].to_bytes(4, "little") + A.tobytes() + B.tobytes()


def q_table(A, B, n_max: int) -> QTable:
    """Word-sum table up to ``k + m = n_max``, memoised per ``(A, B)`` content.

    A cached table is extended in place when a larger ``n_max`` is requested;
    extension happens under a lock, reads of filled entries need none.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    A, B = _pair(A, B)
    key = _key(A, B)
    with _LOCK:
        tab = _CACHE.get(key)
        if tab is None:
            tab = _CACHE[key] = QTable(A.copy(), B.copy())
        if tab.n_max < n_max:
            tab.extend(n_max)
    return tab


def clear_q_cache():
    with _LOCK:
        _CACHE.clear()


def _inv_gamma(x, classical):
    if classical:
        # x is a positive integer here: 1/(x-1)!
        return np.array([1.0 / math.factorial(int(v) - 1) if v <= 171 else 0.0 for v in x])
    return rgamma(x)


def _series_grid(P, rho, alpha, beta, s, classical=False):
    """``sum_n P_n s**(n alpha) / Gamma(n alpha + beta)`` for every ``s``.

    ``P`` holds the normalised sums ``P_n / rho**n``.
    """
    ks = np.arange(P.shape[0])
    x = ks * alpha + beta
    rs = rho * np.asarray(s, dtype=float) ** alpha
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lk = ks[None, :] * np.log(rs)[:, None]
        direct = rs[:, None] ** ks[None, :] * _inv_gamma(x, classical)[None, :]
        viaexp = gammasgn(x)[None, :] * np.exp(lk - gammaln(x)[None, :])
        coef = np.where(~(lk >= 690.0), direct, viaexp)
    return np.einsum("mk,kab->mab", coef, P)


def _truncation(alpha, r, tol, max_terms, betas):
    for n0 in range(max_terms):
        if max(ml_remainder(alpha, b, r, n0) for b in betas) < tol:
            return n0
    raise NonConvergence(f"Q-series with |A|+|B|={r:g} needs more than {max_terms} terms")


def _qseries_solve(alpha, A, B, f, x, y, grid, ctl, classical):
    a = as_alpha(alpha)
    A, B = _pair(A, B)
    n = A.shape[0]
    x = as_vector(x, n, "x")
    y = as_vector(y, n, "y")
    f = as_forcing(f, n)
    ctl = ctl or SeriesControl()
    T = grid.T
    rho = float(np.linalg.norm(A, 2) + np.linalg.norm(B, 2))
    if rho == 0.0:
        rho = 1.0
    r = rho * T**a
    # remainder prefactors: 1, T, T**alpha * sup|f| for the x, y and forcing parts
    scale = max(1.0, T, T**a * (f.sup_bound(grid) if not f.is_zero() else 0.0))
    betas = (1.0, 2.0, a) if not f.is_zero() else (1.0, 2.0)
    n0 = _truncation(a, r, ctl.tol / scale / max(1.0, np.abs(np.r_[x, y]).max()),
                     ctl.max_terms, betas)
    tab = q_table(A, B, n0)
    P = np.stack([tab.diagonal_sum(k) / rho**k for k in range(n0 + 1)])
    if not np.all(np.isfinite(P)):
        raise NonConvergence("Q-table overflowed")
    t = grid.nodes
    Cx = _series_grid(P, rho, a, 1.0, t, classical)
    Sy = t[:, None, None] * _series_grid(P, rho, a, 2.0, t, classical)
    u = Cx @ x + Sy @ y
    if not f.is_zero():
        G = _series_grid(P, rho, a, a, t, classical)
        u += kernel_convolution(a, G, f.on_grid(grid), grid.h)
    u[0] = x
    return Trajectory(grid, u, {"terms": n0 + 1, "rho": rho})


def solve_nonpermutable(alpha, A, B, f, x, y, grid: TimeGrid,
                        ctl: Optional[SeriesControl] = None) -> Trajectory:
    """Solve with constant, possibly non-commuting ``A`` and ``B`` via the ``Q`` series.

    Truncation uses the absolutely convergent term bound
    ``(||A|| + ||B||)**n g_{n alpha + 1}(t)`` and its Mittag-Leffler tail.
    The forcing integral uses the product trapezoidal rule.
    """
    return _qseries_solve(alpha, A, B, f, x, y, grid, ctl, classical=False)


def solve_classical_nonpermutable(A, B, f, x, y, grid: TimeGrid,
                                  ctl: Optional[SeriesControl] = None) -> Trajectory:
    """The ``alpha = 2`` case of :func:`solve_nonpermutable` with factorial coefficients."""
    return _qseries_solve(2.0, A, B, f, x, y, grid, ctl, classical=True)


def solve_permutable(alpha, A, B, f, x, y, grid: TimeGrid,
                     ctl: Optional[SeriesControl] = None) -> Trajectory:
    """Closed form for commuting ``A`` and ``B``.

    ``u = E_{alpha}(L t**alpha) x + t E_{alpha,2}(L t**alpha) y
    + (t**(alpha-1) E_{alpha,alpha}(L t**alpha)) * f`` with ``L = A + B``.

    Raises
    ------
    NotPermutable
        If ``||AB - BA|| > 1e-12 ||A|| ||B||``.
    """
    a = as_alpha(alpha)
    A, B = _pair(A, B)
    _, ok = commutator(A, B)
    if not ok:
        raise NotPermutable("A and B do not commute; use solve_nonpermutable")
    n = A.shape[0]
    x = as_vector(x, n, "x")
    y = as_vector(y, n, "y")
    f = as_forcing(f, n)
    L = A + B
    u = cosine_family_grid(a, L, grid).values @ x + sine_family_grid(a, L, grid).values @ y
    if not f.is_zero():
        u += kernel_convolution(a, rl_kernel_table(a, L, grid), f.on_grid(grid), grid.h)
    u[0] = x
    return Trajectory(grid, u)


def solve_classical_permutable(A, B, f, x, y, grid: TimeGrid,
                               ctl: Optional[SeriesControl] = None) -> Trajectory:
    """``alpha = 2`` closed form, written with ``E_{2,1}`` and ``E_{2,2}`` instead of
    ``cos`` and ``sin`` of ``sqrt(A + B)`` so that no matrix square root is needed."""
    return solve_permutable(2.0, A, B, f, x, y, grid, ctl)
