"""Product-integration rules for weakly singular convolutions on uniform grids.

On every subinterval the smooth factor of the integrand is interpolated
linearly while the algebraic weight ``(t - s)**(a-1)`` is integrated in
closed form, which gives second order for smooth factors without refining
near the singularity.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gamma

from . import _kernels
from .grid import TimeGrid


def kernel_convolution(a, G, phi, h):
    """``int_0^{t_i} (t_i - s)**(a-1) G(t_i - s) phi(s) ds`` at every node.

    Parameters
    ----------
    a : float
        Exponent of the singular weight, ``a > 0``.
    G : ndarray, shape (N+1, n, n)
        Smooth kernel factor sampled at the grid offsets ``t_m``.
    phi : ndarray, shape (N+1, n) or (N+1, n, k)
        Integrand samples.
    h : float
        Grid step.
    """
    phi = np.asarray(phi, dtype=float)
    vec = phi.ndim == 2
    phi3 = phi[:, :, None] if vec else phi
    toeplitz, start = _kernels.product_weights(a, phi.shape[0] - 1)
    out = _kernels.conv_matrix(toeplitz, start, G, phi3)
    out *= h**a / (a * (a + 1.0))
    return out[:, :, 0] if vec else out


def fractional_integral(order, values, grid: TimeGrid):
    """Discrete Riemann-Liouville integral ``I^order`` of sampled values.

    ``values`` has shape ``(N+1, ...)``; the result has the same shape with
    ``0`` at ``t_0``.
    """
    values = np.asarray(values, dtype=float)
    if order == 0:
        return values.copy()
    flat = values.reshape(values.shape[0], -1)
    toeplitz, start = _kernels.product_weights(order, grid.N)
    out = _kernels.conv_scalar(toeplitz, start, flat)
    out *= grid.h**order / (order * (order + 1.0) * gamma(order))
    return out.reshape(values.shape)
