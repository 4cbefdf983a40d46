"""Matrix stand-ins for bounded operators, time-dependent coefficients and forcings."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch
from .grid import TimeGrid


def as_matrix(A) -> np.ndarray:
    """Coerce ``A`` (array-like, scalar or :class:`BoundedOperator`) to a square float matrix."""
    if isinstance(A, BoundedOperator):
        return A.entries
    M = np.asarray(A, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"operator must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("operator has non-finite entries")
    return M


def as_vector(v, n: int, name: str = "vector") -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (n,):
        raise DimensionMismatch(f"{name} must have shape ({n},), got {v.shape}")
    return v


@dataclass(frozen=True)
class BoundedOperator:
    """Dense square real matrix standing in for an element of L(X)."""

    entries: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.entries, dtype=float)
        if M.ndim == 0:
            M = M.reshape(1, 1)
        object.__setattr__(self, "entries", as_matrix(M))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def norm(self) -> float:
        """Spectral norm."""
        return float(np.linalg.norm(self.entries, 2))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


class TimeFunction:
    """A map ``t -> value`` on ``[0, T]`` together with its derivative.

    Three kinds are supported:

    ``constant``
        value is fixed, derivative is zero.
    ``polynomial``
        ``sum_k c_k t**k`` with array coefficients, derivative exact.
    ``tabulated``
        samples on an increasing time axis, evaluated by piecewise-linear
        interpolation; the derivative is the central difference of the
        samples with second-order one-sided stencils at the two ends.
    """

    def __init__(self, kind: str, shape: tuple, *, coeffs=None, times=None, samples=None):
        if kind not in ("constant", "polynomial", "tabulated"):
            raise ValueError(f"unknown kind {kind!r}")
        self.kind = kind
        self.shape = tuple(shape)
        self._coeffs = None
        if kind in ("constant", "polynomial"):
            c = np.asarray(coeffs, dtype=float)
            if c.shape[1:] != self.shape:
                raise DimensionMismatch(f"coefficients have shape {c.shape[1:]}, expected {self.shape}")
            if not np.all(np.isfinite(c)):
                raise ValueError("coefficients must be finite")
            self._coeffs = c
        else:
            times = np.asarray(times, dtype=float)
            samples = np.asarray(samples, dtype=float)
            if times.ndim != 1 or times.size < 3 or np.any(np.diff(times) <= 0):
                raise ValueError("tabulated times must be increasing with at least 3 entries")
            if samples.shape != (times.size,) + self.shape:
                raise DimensionMismatch(
                    f"samples have shape {samples.shape}, expected {(times.size,) + self.shape}")
            if not np.all(np.isfinite(samples)):
                raise ValueError("samples must be finite")
            self._times = times
            self._samples = samples
            self._dsamples = np.gradient(samples, times, axis=0, edge_order=2)

    def _interp(self, table, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        flat = table.reshape(table.shape[0], -1)
        out = np.empty((t.size, flat.shape[1]))
        for c in range(flat.shape[1]):
            out[:, c] = np.interp(t, self._times, flat[:, c])
        return out.reshape((t.size,) + self.shape)

    def sample(self, t) -> np.ndarray:
        """Values at the times ``t``; shape ``(len(t),) + shape``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind == "tabulated":
            return self._interp(self._samples, t)
        powers = t[:, None] ** np.arange(self._coeffs.shape[0])[None, :]
        return np.tensordot(powers, self._coeffs, axes=(1, 0))

    def sample_deriv(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind == "tabulated":
            return self._interp(self._dsamples, t)
        K = self._coeffs.shape[0]
        if K <= 1:
            return np.zeros((t.size,) + self.shape)
        k = np.arange(1, K)
        powers = t[:, None] ** (k - 1)[None, :] * k[None, :]
        return np.tensordot(powers, self._coeffs[1:], axes=(1, 0))

    def eval(self, t: float) -> np.ndarray:
        return self.sample([t])[0]

    def deriv(self, t: float) -> np.ndarray:
        return self.sample_deriv([t])[0]

    def on_grid(self, grid: TimeGrid) -> np.ndarray:
        return self.sample(grid.nodes)

    def _norms(self, values):
        if values.ndim == 2:
            return np.linalg.norm(values, axis=1)
        return np.linalg.norm(values, ord=2, axis=(1, 2))

    def sup_bound(self, grid: TimeGrid) -> float:
        """``sup_s max(||F(s)||, ||F'(s)||)`` over the grid nodes."""
        t = grid.nodes
        return float(max(self._norms(self.sample(t)).max(), self._norms(self.sample_deriv(t)).max()))

    @property
    def is_constant(self) -> bool:
        if self.kind == "tabulated":
            return bool(np.all(self._samples == self._samples[0]))
        return bool(np.all(self._coeffs[1:] == 0.0))

    def is_zero(self) -> bool:
        if self.kind == "tabulated":
            return not np.any(self._samples)
        return not np.any(self._coeffs)


class TimeDependentOperator(TimeFunction):
    """``t -> B(t)``, an ``n x n`` matrix-valued coefficient."""

    @classmethod
    def constant(cls, B) -> "TimeDependentOperator":
        B = as_matrix(B)
        return cls("constant", B.shape, coeffs=B[None])

    @classmethod
    def zero(cls, n: int) -> "TimeDependentOperator":
        return cls.constant(np.zeros((n, n)))

    @classmethod
    def polynomial(cls, coeffs: Sequence) -> "TimeDependentOperator":
        """``B(t) = sum_k coeffs[k] t**k``."""
        mats = [as_matrix(c) for c in coeffs]
        if not mats:
            raise ValueError("need at least one coefficient")
        return cls("polynomial", mats[0].shape, coeffs=np.stack(mats))

    @classmethod
    def tabulated(cls, times, samples) -> "TimeDependentOperator":
        samples = np.asarray(samples, dtype=float)
        return cls("tabulated", samples.shape[1:], times=times, samples=samples)

    @property
    def dim(self) -> int:
        return self.shape[0]


class Forcing(TimeFunction):
    """``t -> f(t)``, an ``n``-vector valued source term."""

    @classmethod
    def constant(cls, c) -> "Forcing":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls("constant", c.shape, coeffs=c[None])

    @classmethod
    def zero(cls, n: int) -> "Forcing":
        return cls.constant(np.zeros(n))

    @classmethod
    def polynomial(cls, coeffs) -> "Forcing":
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        return cls("polynomial", c.shape[1:], coeffs=c)

    @classmethod
    def tabulated(cls, times, samples) -> "Forcing":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        return cls("tabulated", samples.shape[1:], times=times, samples=samples)

    @property
    def dim(self) -> int:
        return self.shape[0]


def as_time_operator(B, n: int) -> TimeDependentOperator:
    if B is None:
        return TimeDependentOperator.zero(n)
    if not isinstance(B, TimeDependentOperator):
        B = TimeDependentOperator.constant(B)
    if B.shape != (n, n):
        raise DimensionMismatch(f"B has shape {B.shape}, A is {n}x{n}")
    return B


def as_forcing(f, n: int) -> Forcing:
    if f is None:
        return Forcing.zero(n)
    if not isinstance(f, Forcing):
        f = Forcing.constant(f)
    if f.shape != (n,):
        raise DimensionMismatch(f"forcing has shape {f.shape}, expected ({n},)")
    return f


@dataclass(frozen=True)
class GrowthEnvelope:
    """Constants with ``||C_alpha(t; A)|| <= M exp(omega t)``."""

    M: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        if not self.M >= 1.0:
            raise ValueError(f"envelope M must be >= 1, got {self.M!r}")
        if not self.omega >= 0.0:
            raise ValueError(f"envelope omega must be >= 0, got {self.omega!r}")

    def __call__(self, t):
        return self.M * np.exp(self.omega * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class SeriesControl:
    """Truncation settings for the perturbation series.

    ``envelope`` and ``K_t`` may be left as ``None``; solvers then estimate
    the envelope and compute ``K_t`` from ``B`` on the grid. A supplied
    ``K_t`` smaller than the computed value is rejected.
    """

    tol: float = 1e-12
    max_terms: int = 80
    envelope: Optional[GrowthEnvelope] = None
    K_t: Optional[float] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_terms) < 1:
            raise ValueError("max_terms must be positive")
        if self.K_t is not None and self.K_t < 0:
            raise ValueError("K_t must be non-negative")

    def with_(self, **kw) -> "SeriesControl":
        return replace(self, **kw)
