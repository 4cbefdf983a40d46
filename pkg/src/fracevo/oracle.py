"""Independent reference solvers and residual checks.

Nothing here uses Mittag-Leffler functions, so agreement with the series
and closed-form solvers is a genuine cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import gamma, rgamma

from . import _kernels
from .errors import DimensionMismatch, GridTooCoarse
from .grid import TimeGrid, Trajectory
from .mlfunc import as_alpha
from .operators import (Forcing, TimeDependentOperator, as_forcing, as_matrix,
                        as_time_operator, as_vector)

__all__ = ["IvpSpec", "adams_solve", "caputo_l1_derivative", "residual", "starting_exponents"]


@dataclass
class IvpSpec:
    """``u^(alpha) = (A + B(t)) u + f(t)``, ``u(0) = x``, ``u'(0) = y`` on ``grid``."""

    alpha: float
    A: np.ndarray
    B: Optional[TimeDependentOperator]
    f: Optional[Forcing]
    x: np.ndarray
    y: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        self.alpha = as_alpha(self.alpha)
        self.A = as_matrix(self.A)
        n = self.A.shape[0]
        self.B = as_time_operator(self.B, n)
        self.f = as_forcing(self.f, n)
        self.x = as_vector(self.x, n, "x")
        self.y = as_vector(self.y, n, "y")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def operator_samples(self) -> np.ndarray:
        """``A + B(t_i)`` at every node, shape ``(N+1, n, n)``."""
        return self.A[None] + self.B.on_grid(self.grid)

    def forcing_samples(self) -> np.ndarray:
        return self.f.on_grid(self.grid)


def adams_solve(spec: IvpSpec, backend=None) -> Trajectory:
    """Fractional Adams-Bashforth-Moulton (PECE) solution of the Volterra form

        u(t) = x + t y + I^alpha [ (A + B) u + f ](t).

    Predictor weights ``h**a/Gamma(a+1) ((n+1-j)**a - (n-j)**a)``; corrector
    weights are the product trapezoidal weights for ``g_alpha``. One corrector
    sweep per step. Error is ``O(h**2)`` for smooth solutions and degrades
    towards ``O(h**alpha)`` when the solution has a ``t**alpha`` component.
    """
    a = spec.alpha
    grid = spec.grid
    N, h = grid.N, grid.h
    m = np.arange(N + 1, dtype=float)
    pred_w = (m + 1.0) ** a - m**a
    toeplitz, start = _kernels.product_weights(a, N)
    u = _kernels.adams_pece(a, h, spec.operator_samples(), spec.forcing_samples(),
                            spec.x, spec.y, pred_w, toeplitz, start,
                            h**a / gamma(a + 1.0), h**a / gamma(a + 2.0), backend=backend)
    return Trajectory(grid, u, {"solver": "adams", "backend": backend or _kernels.backend()})


def _second_differences(v, h):
    D = np.empty_like(v)
    D[1:-1] = v[2:] - 2.0 * v[1:-1] + v[:-2]
    if v.shape[0] >= 4:
        D[0] = 2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]
        D[-1] = 2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]
    else:
        D[0] = D[-1] = D[1]
    return D / h**2


def starting_exponents(alpha: float, cutoff: float = 1.5):
    """Exponents reproduced exactly by the corrected Caputo differentiator.

    The integers 0..3 plus every non-integer ``n alpha + k`` (``n >= 1``,
    ``k >= 0``) below ``alpha + cutoff``; these are the leading singular
    terms in the expansion of solutions at ``t = 0``.
    """
    out = {0.0, 1.0, 2.0, 3.0}
    lim = alpha + cutoff
    n = 1
    while n * alpha < lim:
        k = 0
        while n * alpha + k < lim:
            s = round(n * alpha + k, 12)
            if abs(s - round(s)) > 1e-9:
                out.add(s)
            k += 1
        n += 1
    return sorted(out)


def _base_caputo(v, a, grid):
    # I^{2-a} of the second differences, product trapezoidal rule
    D2 = _second_differences(v, grid.h)
    c = 2.0 - a
    toeplitz, start = _kernels.product_weights(c, grid.N)
    out = _kernels.conv_scalar(toeplitz, start, D2)
    return out * (grid.h**c / (c * (c + 1.0)) * rgamma(c))


def caputo_l1_derivative(u, alpha, corrections="auto") -> Trajectory:
    """Discrete Caputo derivative of order ``1 < alpha <= 2``.

    Second differences (central inside, one-sided four-point at the ends)
    are integrated against ``g_{2-alpha}`` with product trapezoidal weights.
    For ``alpha = 2`` this is the plain second difference.

    Parameters
    ----------
    u : Trajectory
        Samples of shape ``(N+1,)``, ``(N+1, n)`` or ``(N+1, n, k)``.
    corrections : {"auto", None}
        With ``"auto"`` (and ``alpha < 2``) starting weights on the first
        few nodes make the scheme exact for ``t**s`` for every ``s`` in
        :func:`starting_exponents`. Without them the error near ``t = 0``
        does not decay for solutions containing ``t**alpha``.

    Raises
    ------
    GridTooCoarse
        Fewer than three nodes.
    """
    a = as_alpha(alpha)
    grid = u.grid
    if grid.N < 2:
        raise GridTooCoarse(f"need at least 3 nodes, got {grid.N + 1}")
    vals = u.values
    flat = vals.reshape(vals.shape[0], -1)
    if a == 2.0:
        return Trajectory(grid, _second_differences(flat, grid.h).reshape(vals.shape))

    out = _base_caputo(flat, a, grid)
    sig = starting_exponents(a)
    m = len(sig)
    if corrections == "auto" and grid.N + 1 >= 2 * m:
        # residual of the base scheme on j**s (unit step), solved for start weights
        j = np.arange(grid.N + 1, dtype=float)
        unit = TimeGrid(float(grid.N), grid.N)
        P = np.stack([j**s for s in sig], axis=1)
        base = _base_caputo(P, a, unit)
        exact = np.zeros_like(base)
        for c, s in enumerate(sig):
            if s >= 2.0 or (s > 1.0 and s != int(s)):
                exact[1:, c] = gamma(s + 1.0) / gamma(s + 1.0 - a) * j[1:] ** (s - a)
        R = (exact - base).T
        V = P[:m].T
        W = lu_solve(lu_factor(V), R)
        W[:, 0] = 0.0
        out += (W.T @ flat[:m]) * grid.h ** (-a)
    elif corrections not in ("auto", None):
        raise ValueError(f"unknown corrections mode {corrections!r}")
    out[0] = 0.0
    return Trajectory(grid, out.reshape(vals.shape))


def residual(u: Trajectory, spec: IvpSpec, corrections="auto") -> Trajectory:
    """``|| D^alpha u - (A + B(t)) u - f ||`` at every node.

    The value at ``t_0`` is set to 0 (the initial data are imposed there);
    acceptance checks use the interior nodes ``1..N-1``.
    """
    if u.grid != spec.grid:
        raise DimensionMismatch("trajectory and problem use different grids")
    D = caputo_l1_derivative(u, spec.alpha, corrections).values
    L = spec.operator_samples()
    R = D - np.einsum("mab,mb->ma", L, u.values) - spec.forcing_samples()
    r = np.linalg.norm(R, axis=1)
    r[0] = 0.0
    return Trajectory(spec.grid, r)
