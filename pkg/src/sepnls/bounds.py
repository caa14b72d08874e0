"""Cost-gap diagnostics for the warm start.

The refined cost can undershoot the stage-1 cost by at most
E = (N/2) * ell2^2 * (L_A^2 * ell1^2 + L_b^2), where L_A and L_b are
Lipschitz constants of A and b over the sampling ball (in the rms-over-
samples Frobenius norm). Both costs are compared under R = I so the bracket
is a pure sum-of-squares statement.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .canon import DiagCov
from .stage2 import cost

__all__ = [
    "BoundsReport",
    "estimate_lipschitz",
    "error_bound",
    "bracket_check",
    "bounds_report",
    "bounds_to_json",
]


@dataclass
class BoundsReport:
    ell1: float
    ell2: float
    L_A: float
    L_b: float
    E1: float
    E2: float
    E: float
    J_stage1: float
    J_final: float
    bracket_holds: bool


def _ball_points(center, ell2, lo, hi, count, seed):
    rng = np.random.default_rng(seed)
    n = center.size
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    radii = ell2 * rng.uniform(0.0, 1.0, size=count) ** (1.0 / n)
    return np.clip(center[None, :] + d * radii[:, None], lo[None, :], hi[None, :])


def estimate_lipschitz(model, dataset, center, nsamples=200, seed=0):
    """Sampled lower estimates of the Lipschitz constants of A and b.

    Draws nsamples point pairs in the ell2 ball around center (clipped to the
    box) and maximizes the difference quotient in the rms-over-samples
    Frobenius norm. Deterministic for a given seed; a zero ell2 gives (0, 0).
    """
    space = model.space
    center = np.asarray(center, float)
    if space.ell2 == 0.0:
        return 0.0, 0.0
    X = _ball_points(center, space.ell2, space.lo2, space.hi2, nsamples, seed)
    Y = _ball_points(center, space.ell2, space.lo2, space.hi2, nsamples, seed + 1)
    N = dataset.N
    L_A = 0.0
    L_b = 0.0
    for x, y in zip(X, Y):
        dist = float(np.linalg.norm(x - y))
        if dist < 1e-14:
            continue
        dA = model.eval_A_all(dataset.contexts, x) - model.eval_A_all(dataset.contexts, y)
        db = model.eval_b_all(dataset.contexts, x) - model.eval_b_all(dataset.contexts, y)
        L_A = max(L_A, float(np.sqrt(np.sum(dA * dA) / N)) / dist)
        L_b = max(L_b, float(np.sqrt(np.sum(db * db) / N)) / dist)
    return L_A, L_b


def error_bound(N, ell1, ell2, L_A, L_b) -> float:
    """E = (N/2) * ell2^2 * (L_A^2 * ell1^2 + L_b^2).

    Evaluated in exact rational arithmetic on the decimal reading of the
    inputs, so identities like 50 * 0.01 * 5 = 2.5 hold exactly instead of
    picking up binary representation error from values such as 0.1.
    """
    if min(N, ell1, ell2, L_A, L_b) < 0:
        raise ValueError("error_bound arguments must be non-negative")
    fN, f1, f2, fA, fb = (Fraction(repr(float(v)))
                          for v in (N, ell1, ell2, L_A, L_b))
    return float(Fraction(1, 2) * fN * f2 * f2 * (fA * fA * f1 * f1 + fb * fb))


def bracket_check(J_stage1, E, J_final) -> bool:
    """J_stage1 - E <= J_final <= J_stage1 (up to roundoff on the right)."""
    slack = 1e-9 * max(1.0, abs(J_stage1))
    return bool(J_stage1 - E <= J_final <= J_stage1 + slack)


def bounds_report(model, dataset, warm, result, nsamples=200, seed=0) -> BoundsReport:
    """Assemble the full diagnostic from a stage-1 warm start and a refined
    estimate. warm is (xi1p, xi2p) or a Stage1Report; result carries the
    final xi1, xi2. The Lipschitz ball is centered at the warm xi2."""
    space = model.space
    if hasattr(warm, "chosen"):
        warm = (warm.chosen.xi1p, warm.chosen.xi2p)
    xi1p, xi2p = (np.asarray(v, float) for v in warm)
    L_A, L_b = estimate_lipschitz(model, dataset, xi2p, nsamples=nsamples, seed=seed)
    E1 = L_A * space.ell1 * space.ell2
    E2 = L_b * space.ell2
    E = error_bound(dataset.N, space.ell1, space.ell2, L_A, L_b)
    I = DiagCov.identity(model.m)
    J_stage1 = cost(model, dataset, xi1p, xi2p, I)
    J_final = cost(model, dataset, result.xi1, result.xi2, I)
    return BoundsReport(
        ell1=space.ell1, ell2=space.ell2, L_A=L_A, L_b=L_b,
        E1=E1, E2=E2, E=E,
        J_stage1=J_stage1, J_final=J_final,
        bracket_holds=bracket_check(J_stage1, E, J_final),
    )


def bounds_to_json(rep: BoundsReport) -> dict:
    return {
        "ell1": rep.ell1, "ell2": rep.ell2,
        "L_A": rep.L_A, "L_b": rep.L_b,
        "E1": rep.E1, "E2": rep.E2, "E": rep.E,
        "J_stage1": rep.J_stage1, "J_final": rep.J_final,
        "bracket_holds": rep.bracket_holds,
    }
