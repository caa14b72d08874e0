"""Stacked linear least squares for the xi1 subproblem.

For a fixed xi2 the model is linear in xi1: stacking all N samples gives
z_big = A_big @ xi1 + b_big + v. Solves use orthogonal factorizations
(never the normal equations) so conditioning is that of A_big itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .canon import CanonicalModel, Dataset, DiagCov, InvalidModelError, VAR_FLOOR

__all__ = [
    "SingularSystemError",
    "StackedSystem",
    "stack",
    "ols",
    "wls",
    "residuals",
    "residual_cov",
    "trace_R",
]

RANK_RTOL = 1e-10


class SingularSystemError(RuntimeError):
    """The stacked regressor is numerically rank deficient."""

    def __init__(self, msg, rank=None, needed=None):
        super().__init__(msg)
        self.rank = rank
        self.needed = needed


@dataclass(frozen=True)
class StackedSystem:
    """Row-stacked regression quantities for one xi2.

    Rows are ordered sample-major: sample k occupies rows k*m .. k*m + m - 1.
    """

    A_big: np.ndarray
    b_big: np.ndarray
    z_big: np.ndarray
    N: int
    m: int


def stack(model: CanonicalModel, dataset: Dataset, xi2) -> StackedSystem:
    """Evaluate and stack A, b, z over the whole dataset at one xi2."""
    if dataset.N == 0:
        raise InvalidModelError("cannot stack an empty dataset")
    if dataset.m != model.m:
        raise InvalidModelError(
            f"dataset has m = {dataset.m} but model {model.model_id} has m = {model.m}"
        )
    n1 = model.space.n1
    try:
        A_all = np.asarray(model.eval_A_all(dataset.contexts, xi2), dtype=float)
        b_all = np.asarray(model.eval_b_all(dataset.contexts, xi2), dtype=float)
    except InvalidModelError:
        raise
    except Exception as exc:  # identify the offending sample for the caller
        for k, ctx in enumerate(dataset.contexts):
            try:
                model.eval_A(ctx, xi2)
                model.eval_b(ctx, xi2)
            except Exception as inner:
                raise InvalidModelError(
                    f"model evaluation failed at sample {k}: {inner}"
                ) from inner
        raise InvalidModelError(f"model evaluation failed: {exc}") from exc
    if A_all.shape != (dataset.N, model.m, n1) or b_all.shape != (dataset.N, model.m):
        raise InvalidModelError(
            f"batch evaluation returned shapes {A_all.shape}, {b_all.shape}"
        )
    bad = np.nonzero(
        ~(np.isfinite(A_all).all(axis=(1, 2)) & np.isfinite(b_all).all(axis=1))
    )[0]
    if bad.size:
        raise InvalidModelError(
            f"model evaluation produced non-finite values at sample {bad[0]}"
        )
    return StackedSystem(
        A_big=A_all.reshape(dataset.N * model.m, n1),
        b_big=b_all.reshape(dataset.N * model.m),
        z_big=dataset.z.reshape(dataset.N * model.m),
        N=dataset.N,
        m=model.m,
    )


def _lstsq_qr(A, y):
    """Least squares via column-pivoted QR with an explicit rank check."""
    # scipy's lstsq uses SVD (gelsd) by default; that is an orthogonal
    # factorization with reliable rank revelation, which is all we need.
    sol, _res, rank, sv = scipy.linalg.lstsq(A, y, lapack_driver="gelsd")
    smax = sv[0] if sv is not None and len(sv) else 0.0
    needed = A.shape[1]
    if rank < needed or smax == 0.0 or sv[-1] <= RANK_RTOL * smax:
        raise SingularSystemError(
            f"stacked regressor is rank deficient: rank {rank} of {needed} "
            f"(singular values {sv})",
            rank=int(rank),
            needed=int(needed),
        )
    return sol


def ols(system: StackedSystem) -> np.ndarray:
    """Ordinary least squares for xi1, min ||z_big - b_big - A_big x||."""
    return _lstsq_qr(system.A_big, system.z_big - system.b_big)


def wls(system: StackedSystem, R: DiagCov) -> np.ndarray:
    """Weighted least squares under a diagonal per-channel covariance.

    Rows are scaled by 1/sqrt(r_j) for their measurement channel j; with
    R = I this reduces exactly to ols.
    """
    if R.m != system.m:
        raise InvalidModelError(f"R has {R.m} channels, system has {system.m}")
    w = 1.0 / np.sqrt(R.r)
    w_big = np.tile(w, system.N)
    return _lstsq_qr(system.A_big * w_big[:, None], (system.z_big - system.b_big) * w_big)


def residuals(system: StackedSystem, xi1) -> np.ndarray:
    """Per-sample residual matrix v = z - A xi1 - b, shape (N, m)."""
    v = system.z_big - system.b_big - system.A_big @ np.asarray(xi1, dtype=float)
    return v.reshape(system.N, system.m)


def residual_cov(v: np.ndarray) -> DiagCov:
    """Per-channel mean-square residuals as a diagonal covariance estimate.

    r_j = (1/N) sum_k v_{k,j}^2, floored at 1e-12 with the floored mask set.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] == 0:
        raise InvalidModelError("cannot estimate covariance from zero residual rows")
    r = np.mean(v * v, axis=0)
    return DiagCov(r, floored=r < VAR_FLOOR)


def trace_R(R: DiagCov) -> float:
    return float(np.sum(R.r))
