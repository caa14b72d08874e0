"""Canonical problem types for measurement models that are affine in part of
the parameter vector.

A model predicts z_k = A(xi2; ctx_k) @ xi1 + b(xi2; ctx_k) + v_k, where xi1
enters linearly and xi2 nonlinearly. Everything downstream (linear solves,
initialization, refinement, error bounds) works against the small interface
defined here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidModelError",
    "OutOfBoundsError",
    "ReducedAccuracyWarning",
    "ParamSpace",
    "SampleContext",
    "Dataset",
    "DiagCov",
    "CanonicalModel",
    "predict",
    "fd_jacobian_A",
    "fd_jacobian_b",
    "fd_jac_A_dataset",
    "fd_jac_b_dataset",
]

VAR_FLOOR = 1e-12


class InvalidModelError(ValueError):
    """A model evaluation returned something with the wrong shape or
    non-finite entries."""


class OutOfBoundsError(ValueError):
    """A parameter vector lies outside its declared box."""


class ReducedAccuracyWarning(UserWarning):
    """A finite-difference stencil had to degrade (one-sided or dropped)
    because the evaluation point sits against a box bound."""


def _as_vec(x, n, what):
    arr = np.asarray(x, dtype=float)
    if arr.shape != (n,):
        raise InvalidModelError(f"{what}: expected shape ({n},), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ParamSpace:
    """Parameter-space description: names, boxes, and prior norm radii.

    Parameters
    ----------
    names1, names2 : tuple of str
        Names of the linear and nonlinear parameters.
    lo1, hi1, lo2, hi2 : ndarray
        Elementwise box bounds, lo <= hi (equal pins a dimension).
    ell1, ell2 : float
        Prior 2-norm radii: the truth is assumed to satisfy ||xi1|| <= ell1
        and candidate xi2 values are drawn from the ball of radius ell2.
    """

    names1: tuple
    names2: tuple
    lo1: np.ndarray
    hi1: np.ndarray
    lo2: np.ndarray
    hi2: np.ndarray
    ell1: float
    ell2: float

    def __post_init__(self):
        for attr in ("lo1", "hi1", "lo2", "hi2"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))
        object.__setattr__(self, "names1", tuple(self.names1))
        object.__setattr__(self, "names2", tuple(self.names2))
        if self.lo1.shape != (len(self.names1),) or self.hi1.shape != self.lo1.shape:
            raise InvalidModelError("xi1 bounds do not match names1")
        if self.lo2.shape != (len(self.names2),) or self.hi2.shape != self.lo2.shape:
            raise InvalidModelError("xi2 bounds do not match names2")
        if np.any(self.lo1 > self.hi1) or np.any(self.lo2 > self.hi2):
            raise InvalidModelError("box bounds must satisfy lo <= hi")
        if not (self.ell1 > 0 and self.ell2 >= 0):
            raise InvalidModelError("ell1 must be positive and ell2 non-negative")

    @property
    def n1(self):
        return len(self.names1)

    @property
    def n2(self):
        return len(self.names2)

    def contains1(self, xi1):
        xi1 = _as_vec(xi1, self.n1, "xi1")
        return bool(np.all(xi1 >= self.lo1) and np.all(xi1 <= self.hi1))

    def contains2(self, xi2):
        xi2 = _as_vec(xi2, self.n2, "xi2")
        return bool(np.all(xi2 >= self.lo2) and np.all(xi2 <= self.hi2))

    def clip2(self, xi2):
        return np.clip(np.asarray(xi2, dtype=float), self.lo2, self.hi2)


@dataclass(frozen=True)
class SampleContext:
    """Known per-sample quantities: state vector x and exogenous input u.

    k is the sample's position in its batch; models that evaluate whole
    trajectories use it to address one row.
    """

    x: np.ndarray
    u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    k: int = -1

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))


@dataclass(frozen=True)
class Dataset:
    """A batch of N samples: contexts plus the stacked measurements z (N, m)."""

    contexts: tuple
    z: np.ndarray
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "contexts", tuple(self.contexts))
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        object.__setattr__(self, "z", z)
        if len(self.contexts) != z.shape[0]:
            raise InvalidModelError(
                f"got {len(self.contexts)} contexts but {z.shape[0]} measurement rows"
            )
        if not np.all(np.isfinite(z)):
            raise InvalidModelError("measurements contain non-finite values")

    @property
    def N(self):
        return self.z.shape[0]

    @property
    def m(self):
        return self.z.shape[1]

    def require_size(self, space: ParamSpace):
        """Check the N >= n1 + n2 identifiability floor."""
        need = space.n1 + space.n2
        if self.N < need:
            raise InvalidModelError(
                f"need at least n1 + n2 = {need} samples, got {self.N}"
            )


@dataclass(frozen=True)
class DiagCov:
    """Diagonal measurement covariance. Variances are floored at 1e-12; the
    floored mask records which channels were clipped."""

    r: np.ndarray
    floored: np.ndarray = None

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        if self.floored is None:
            floored = r < VAR_FLOOR
        else:
            floored = np.atleast_1d(np.asarray(self.floored, dtype=bool))
        r = np.maximum(r, VAR_FLOOR)
        if np.any(~np.isfinite(r)):
            raise InvalidModelError("covariance diagonal has non-finite entries")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "floored", floored)

    @classmethod
    def identity(cls, m):
        return cls(np.ones(m))

    @property
    def m(self):
        return self.r.shape[0]

    def logdet(self):
        return float(np.sum(np.log(self.r)))


class CanonicalModel:
    """Base class for models affine in xi1.

    Subclasses must set ``model_id``, ``space``, ``m`` and implement
    ``eval_A(ctx, xi2) -> (m, n1)`` and ``eval_b(ctx, xi2) -> (m,)``.
    Evaluations must be pure (no mutation of observable state) so they can be
    called concurrently. Analytic derivatives and batch evaluation hooks are
    optional; finite differences and per-sample loops are the fallback.
    """

    model_id: str = ""
    space: ParamSpace = None
    m: int = 0

    def eval_A(self, ctx: SampleContext, xi2: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_b(self, ctx: SampleContext, xi2: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # Batch hooks. The defaults loop over contexts; model subclasses override
    # them with vectorized versions where it matters.
    def eval_A_all(self, contexts, xi2) -> np.ndarray:
        return np.stack([self.eval_A(c, xi2) for c in contexts])

    def eval_b_all(self, contexts, xi2) -> np.ndarray:
        return np.stack([self.eval_b(c, xi2) for c in contexts])

    # Optional analytic derivative hooks, shape (N, m, n1, n2) and (N, m, n2).
    # Returning None means "use finite differences".
    def dA_dxi2_all(self, contexts, xi2):
        return None

    def db_dxi2_all(self, contexts, xi2):
        return None

    def _check_A(self, A):
        A = np.asarray(A, dtype=float)
        if A.shape != (self.m, self.space.n1):
            raise InvalidModelError(
                f"{self.model_id}: A has shape {A.shape}, expected "
                f"({self.m}, {self.space.n1})"
            )
        if not np.all(np.isfinite(A)):
            raise InvalidModelError(f"{self.model_id}: A has non-finite entries")
        return A

    def _check_b(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.m,):
            raise InvalidModelError(
                f"{self.model_id}: b has shape {b.shape}, expected ({self.m},)"
            )
        if not np.all(np.isfinite(b)):
            raise InvalidModelError(f"{self.model_id}: b has non-finite entries")
        return b


def predict(model: CanonicalModel, ctx: SampleContext, xi1, xi2) -> np.ndarray:
    """Predict one measurement, A(xi2) @ xi1 + b(xi2), validating bounds.

    Raises OutOfBoundsError if either parameter vector leaves its box and
    InvalidModelError if the model returns malformed values.
    """
    space = model.space
    xi1 = _as_vec(xi1, space.n1, "xi1")
    xi2 = _as_vec(xi2, space.n2, "xi2")
    if not space.contains1(xi1):
        raise OutOfBoundsError(f"xi1 {xi1} outside box [{space.lo1}, {space.hi1}]")
    if not space.contains2(xi2):
        raise OutOfBoundsError(f"xi2 {xi2} outside box [{space.lo2}, {space.hi2}]")
    A = model._check_A(model.eval_A(ctx, xi2))
    b = model._check_b(model.eval_b(ctx, xi2))
    return A @ xi1 + b


def _fd_columns(xi2, lo, hi):
    """Per-dimension step sizes and stencil modes honouring the box.

    Returns (h, mode) with mode 0 = central, +1 = forward only, -1 = backward
    only, 2 = pinned (lo == hi, derivative taken as zero).
    """
    xi2 = np.asarray(xi2, dtype=float)
    h = np.maximum(1e-6, 1e-6 * np.abs(xi2))
    mode = np.zeros(xi2.shape, dtype=int)
    for i in range(xi2.size):
        up_ok = xi2[i] + h[i] <= hi[i]
        dn_ok = xi2[i] - h[i] >= lo[i]
        if up_ok and dn_ok:
            mode[i] = 0
        elif up_ok:
            mode[i] = 1
        elif dn_ok:
            mode[i] = -1
        else:
            mode[i] = 2
    return h, mode


def _warn_reduced(mode, what):
    if np.any(mode != 0):
        bad = np.nonzero(mode != 0)[0]
        warnings.warn(
            f"{what}: finite-difference stencil reduced to one-sided/zero for "
            f"dimensions {bad.tolist()} (at a box bound)",
            ReducedAccuracyWarning,
            stacklevel=3,
        )


def _fd_generic(f, xi2, lo, hi, what):
    """Central finite differences of f(xi2) with bound-aware degradation."""
    xi2 = np.asarray(xi2, dtype=float)
    h, mode = _fd_columns(xi2, lo, hi)
    _warn_reduced(mode, what)
    f0 = None
    cols = []
    for i in range(xi2.size):
        if mode[i] == 2:
            if f0 is None:
                f0 = np.asarray(f(xi2), dtype=float)
            cols.append(np.zeros_like(f0))
            continue
        if mode[i] == 0:
            xp = xi2.copy()
            xp[i] += h[i]
            xm = xi2.copy()
            xm[i] -= h[i]
            cols.append((np.asarray(f(xp), float) - np.asarray(f(xm), float)) / (2 * h[i]))
        else:
            if f0 is None:
                f0 = np.asarray(f(xi2), dtype=float)
            xs = xi2.copy()
            xs[i] += mode[i] * h[i]
            cols.append(mode[i] * (np.asarray(f(xs), float) - f0) / h[i])
    return np.stack(cols, axis=-1)


def fd_jacobian_A(model: CanonicalModel, ctx: SampleContext, xi2) -> np.ndarray:
    """d vec A / d xi2 by central differences, shape (m, n1, n2).

    Near a box bound the stencil falls back to one-sided differences and a
    ReducedAccuracyWarning is emitted; a pinned dimension (lo == hi) gets a
    zero column.
    """
    space = model.space
    xi2 = _as_vec(xi2, space.n2, "xi2")
    return _fd_generic(
        lambda v: model._check_A(model.eval_A(ctx, v)),
        xi2, space.lo2, space.hi2, f"{model.model_id}.A",
    )


def fd_jacobian_b(model: CanonicalModel, ctx: SampleContext, xi2) -> np.ndarray:
    """d b / d xi2 by central differences, shape (m, n2). Same bound handling
    as fd_jacobian_A."""
    space = model.space
    xi2 = _as_vec(xi2, space.n2, "xi2")
    return _fd_generic(
        lambda v: model._check_b(model.eval_b(ctx, v)),
        xi2, space.lo2, space.hi2, f"{model.model_id}.b",
    )


def fd_jac_A_dataset(model, contexts, xi2):
    """Dataset-wide dA/dxi2, shape (N, m, n1, n2), via batched evaluations."""
    space = model.space
    xi2 = _as_vec(xi2, space.n2, "xi2")
    return _fd_generic(
        lambda v: model.eval_A_all(contexts, v),
        xi2, space.lo2, space.hi2, f"{model.model_id}.A",
    )


def fd_jac_b_dataset(model, contexts, xi2):
    """Dataset-wide db/dxi2, shape (N, m, n2)."""
    space = model.space
    xi2 = _as_vec(xi2, space.n2, "xi2")
    return _fd_generic(
        lambda v: model.eval_b_all(contexts, v),
        xi2, space.lo2, space.hi2, f"{model.model_id}.b",
    )
