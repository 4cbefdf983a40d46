"""Mittag-Leffler functions (scalar and matrix argument) and the ``g_alpha`` kernels.

All evaluations use the defining power series

.. math::

    E_{\\alpha,\\beta}(z) = \\sum_{k \\ge 0} \\frac{z^k}{\\Gamma(k\\alpha + \\beta)},

truncated by a documented stopping rule and accompanied by a certified bound
on the discarded tail. Arguments whose magnitude exceeds ``max_arg`` are
rejected with :class:`~fracevo.errors.NonConvergence` instead of silently
losing precision to cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, gammasgn, rgamma

from .errors import DimensionMismatch, NonConvergence

DEFAULT_TOL = 1e-13
DEFAULT_MAX_TERMS = 512
DEFAULT_MAX_ARG = 100.0

# k * log(r) above this and r**k would overflow a double
_LOG_OVERFLOW = 690.0


@dataclass(frozen=True)
class FractionalOrder:
    """Order ``alpha`` in (1, 2] of the Caputo derivative."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (1.0 < a <= 2.0):
            raise ValueError(f"fractional order must lie in (1, 2], got {a!r}")
        object.__setattr__(self, "alpha", a)

    @property
    def rl_exponent(self) -> float:
        """Exponent ``alpha - 1`` of the Riemann-Liouville family kernel."""
        return self.alpha - 1.0

    @property
    def caputo_exponent(self) -> float:
        """Exponent ``2 - alpha`` of the Caputo smoothing kernel."""
        return 2.0 - self.alpha

    def __float__(self):
        return self.alpha


@dataclass(frozen=True)
class MLParams:
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if not float(self.alpha) > 0.0:
            raise ValueError(f"Mittag-Leffler alpha must be positive, got {self.alpha!r}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class SeriesInfo:
    """Truncation record of a Mittag-Leffler series evaluation."""

    terms: int
    remainder_bound: float


def as_alpha(alpha) -> float:
    """Accept a :class:`FractionalOrder` or a bare float in (1, 2]."""
    if isinstance(alpha, FractionalOrder):
        return alpha.alpha
    return FractionalOrder(alpha).alpha


def g_kernel(alpha, t):
    """Riemann-Liouville kernel ``t**(alpha-1) / Gamma(alpha)``, zero for ``t <= 0``.

    ``alpha = 0`` gives the zero function (``1/Gamma(0) = 0``). Works
    elementwise on arrays.
    """
    if alpha < 0:
        raise ValueError("g_kernel needs alpha >= 0")
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr)
    if alpha == 0:
        return out if out.ndim else float(out)
    pos = t_arr > 0
    out[pos] = t_arr[pos] ** (alpha - 1.0) * rgamma(alpha)
    return out if out.ndim else float(out)


def _coef(k, alpha, beta, r):
    """Signed ``r**k / Gamma(k*alpha + beta)`` for ``r >= 0`` without overflow."""
    x = k * alpha + beta
    if r == 0.0:
        return float(rgamma(x)) if k == 0 else 0.0
    lk = k * math.log(r)
    if lk < _LOG_OVERFLOW:
        return r**k * float(rgamma(x))
    return float(gammasgn(x)) * math.exp(lk - float(gammaln(x)))


def remainder_bound(alpha, beta, r, last):
    """Certified bound on ``sum_{k > last} r**k / |Gamma(k alpha + beta)|``.

    Uses log-convexity of Gamma: once ``(last+1)*alpha + beta > 0`` the term
    ratio is non-increasing, so the tail is dominated by a geometric series.
    Returns ``inf`` when the ratio test cannot certify convergence yet.
    """
    if r == 0.0:
        return 0.0
    if (last + 1) * alpha + beta <= 0:
        return math.inf
    t1 = abs(_coef(last + 1, alpha, beta, r))
    t2 = abs(_coef(last + 2, alpha, beta, r))
    if t1 == 0.0:
        return 0.0
    q = t2 / t1
    if q >= 1.0:
        return math.inf
    return t1 / (1.0 - q)


def ml_remainder(alpha, beta, r, last, rtol=1e-17):
    """Tail ``sum_{k > last} r**k / Gamma(k alpha + beta)`` for ``r >= 0``.

    Sums terms explicitly until the geometric bound on what is left drops
    below ``rtol`` times the partial tail, so the result is an upper bound
    accurate to rounding. Assumes ``alpha, beta > 0``.
    """
    if r < 0:
        raise ValueError("ml_remainder needs r >= 0")
    if r == 0.0:
        return 0.0
    terms = []
    k = last + 1
    while True:
        terms.append(abs(_coef(k, alpha, beta, r)))
        rest = remainder_bound(alpha, beta, r, k)
        s = math.fsum(terms)
        if rest <= rtol * s or (s == 0.0 and rest == 0.0):
            return s + rest
        k += 1
        if k - last > 10 * DEFAULT_MAX_TERMS:
            raise NonConvergence(f"remainder of E_{alpha},{beta}({r}) did not settle")


def _check_stop(mag, prev, streak, tol, total):
    streak = streak + 1 if (prev is not None and mag <= prev) else 0
    return streak, (streak >= 3 and mag <= tol * (1.0 + total))


def ml_scalar(alpha, beta, z, *, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS,
              max_arg=DEFAULT_MAX_ARG, full_output=False):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)`` for real ``z``.

    The series is summed term by term (compensated summation) and stopped at
    the first ``k`` with ``|t_k| <= tol * (1 + |S_k|)`` after three
    consecutive non-increasing term magnitudes. The leading terms of the
    series can grow before ``Gamma`` wins, hence the monotonicity guard.

    Parameters
    ----------
    alpha, beta : float
        Series parameters, ``alpha > 0``.
    z : float or array_like
        Real argument(s). Arrays are evaluated elementwise.
    tol : float
        Relative/absolute truncation tolerance.
    max_terms : int
        Term budget; exceeding it raises ``NonConvergence``.
    max_arg : float
        Largest accepted ``|z|``.
    full_output : bool
        Also return a :class:`SeriesInfo` with the term count and the
        certified remainder bound.

    Raises
    ------
    NonConvergence
        If ``|z| > max_arg`` or the stopping rule is not met in budget.
    """
    params = MLParams(alpha, beta)
    if np.ndim(z) > 0:
        zs = np.asarray(z, dtype=float)
        vals = [ml_scalar(params.alpha, params.beta, float(v), tol=tol,
                          max_terms=max_terms, max_arg=max_arg) for v in zs.ravel()]
        out = np.array(vals).reshape(zs.shape)
        return (out, None) if full_output else out

    a, b = params.alpha, params.beta
    z = float(z)
    r = abs(z)
    if r > max_arg:
        raise NonConvergence(f"|z| = {r:g} exceeds max_arg = {max_arg:g}")
    sign = -1.0 if z < 0 else 1.0
    terms = []
    total = 0.0
    prev, streak = None, 0
    for k in range(max_terms):
        t = _coef(k, a, b, r) * (sign**k)
        terms.append(t)
        total += t
        mag = abs(t)
        streak, done = _check_stop(mag, prev, streak, tol, abs(total))
        prev = mag
        if done:
            break
    else:
        raise NonConvergence(
            f"E_{a:g},{b:g}({z:g}) not converged within {max_terms} terms")
    value = math.fsum(terms)
    if full_output:
        return value, SeriesInfo(k + 1, remainder_bound(a, b, r, k))
    return value


def _as_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def ml_matrix(alpha, beta, M, scale=1.0, *, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS,
              max_arg=DEFAULT_MAX_ARG, full_output=False):
    """Matrix Mittag-Leffler function ``E_{alpha,beta}(M * scale)``.

    Computed by the truncated power series with explicitly accumulated
    powers; no eigendecomposition, so defective matrices are fine. The
    stopping rule of :func:`ml_scalar` is applied to the norm bound
    ``||M scale||_2**k / |Gamma(k alpha + beta)|``.
    """
    params = MLParams(alpha, beta)
    a, b = params.alpha, params.beta
    M = _as_square(M)
    if scale < 0:
        raise ValueError("scale must be non-negative")
    X = M * float(scale)
    n = X.shape[0]
    r = float(np.linalg.norm(X, 2))
    if r > max_arg:
        raise NonConvergence(f"||M*scale|| = {r:g} exceeds max_arg = {max_arg:g}")

    S = np.zeros((n, n))
    P = np.eye(n)
    log_scale = 0.0
    prev, streak = None, 0
    for k in range(max_terms):
        if k:
            P = P @ X
            pmax = float(np.abs(P).max())
            if pmax > 1e250:
                P /= pmax
                log_scale += math.log(pmax)
        x = k * a + b
        if log_scale == 0.0:
            c = float(rgamma(x))
        else:
            c = float(gammasgn(x)) * math.exp(log_scale - float(gammaln(x)))
        S += c * P
        mag = abs(_coef(k, a, b, r))
        streak = streak + 1 if (prev is not None and mag <= prev) else 0
        prev = mag
        if streak >= 3 and mag <= tol * (1.0 + np.linalg.norm(S, 2)):
            break
    else:
        raise NonConvergence(f"matrix E_{a:g},{b:g} not converged within {max_terms} terms")
    if full_output:
        return S, SeriesInfo(k + 1, remainder_bound(a, b, r, k))
    return S


def _truncation_length(alpha, beta, r, tol, max_terms):
    """Smallest ``K`` whose certified remainder for argument ``r`` is below ``tol``."""
    for k in range(max_terms):
        if k >= 2 and remainder_bound(alpha, beta, r, k) <= tol:
            return k
    raise NonConvergence(
        f"E_{alpha:g},{beta:g} with |z| = {r:g} needs more than {max_terms} terms")


def ml_matrix_grid(alpha, beta, M, scales, *, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS,
                   max_arg=DEFAULT_MAX_ARG):
    """``E_{alpha,beta}(M * s)`` for every ``s`` in ``scales``; shape ``(len(scales), n, n)``.

    One set of normalised powers ``(M/||M||)**k`` is shared by all scales;
    the series length is fixed by the certified remainder at the largest
    scale, so every entry carries an absolute truncation error below ``tol``.
    """
    params = MLParams(alpha, beta)
    a, b = params.alpha, params.beta
    M = _as_square(M)
    s = np.asarray(scales, dtype=float).ravel()
    if np.any(s < 0):
        raise ValueError("scales must be non-negative")
    n = M.shape[0]
    rho = float(np.linalg.norm(M, 2))
    if rho == 0.0 or s.size == 0 or s.max() == 0.0:
        out = np.zeros((s.size, n, n))
        out[:] = np.eye(n) * float(rgamma(b))
        return out
    r_max = rho * s.max()
    if r_max > max_arg:
        raise NonConvergence(f"||M|| * max(scale) = {r_max:g} exceeds max_arg = {max_arg:g}")
    K = _truncation_length(a, b, r_max, tol, max_terms)

    powers = np.empty((K + 1, n, n))
    powers[0] = np.eye(n)
    Mh = M / rho
    for k in range(1, K + 1):
        powers[k] = powers[k - 1] @ Mh

    ks = np.arange(K + 1)
    x = ks * a + b
    rs = rho * s
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logr = np.log(rs)[:, None]
        lk = ks[None, :] * logr
        direct = rs[:, None] ** ks[None, :] * rgamma(x)[None, :]
        viaexp = gammasgn(x)[None, :] * np.exp(lk - gammaln(x)[None, :])
        coef = np.where(lk < _LOG_OVERFLOW, direct, viaexp)
    # 0**0 = 1 at s = 0
    zero = rs == 0.0
    coef[zero, :] = 0.0
    coef[zero, 0] = rgamma(b)
    return np.einsum("mk,kab->mab", coef, powers)
