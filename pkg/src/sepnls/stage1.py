"""Stage 1: residual-sampling initialization over the nonlinear parameters.

For sampled candidates xi2p the linear subproblem is solved by least squares
and the per-channel residual covariance R(xi2p) is recorded; the candidate
minimizing Tr[R] becomes the warm start for refinement. Screening checks
that, within the sampling ball, the first-order variation of A and b is small
relative to their size and that the squared-entry curvature is positive
definite, which is what justifies using the trace map as a proxy objective.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .canon import (
    CanonicalModel,
    Dataset,
    fd_jac_A_dataset,
    fd_jac_b_dataset,
)
from .linlsq import SingularSystemError, ols, residual_cov, residuals, stack, trace_R

__all__ = [
    "Stage1Error",
    "SamplerConfig",
    "CandidateRecord",
    "Stage1Report",
    "sample_xi2",
    "screen_first_order",
    "screen_second_order",
    "evaluate_candidate",
    "uniqueness",
    "run_stage1",
    "write_map_csv",
]

PD_EIG_RTOL = 1e-8
TIE_RTOL = 1e-12


class Stage1Error(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    """How to draw xi2 candidates and how to judge them.

    mode is one of "grid" (cartesian product of per-dimension linspaces over
    the box), "uniform" (iid uniform in the box), or "gaussian" (iid normal
    with the given mean/std, clipped to the box). All modes are deterministic
    given the seed. ref is the center of the sampling ball of radius ell2
    (defaults to the origin); draws outside the ball are kept in the report
    but can never pass screening or be chosen.

    T1/T2 bound the first-order variation ratios of A and b; rho is the
    relative band above the minimum trace used for the uniqueness verdict and
    tau the ball fraction its diameter may span while still counting as one
    minimum.
    """

    mode: str = "gaussian"
    count: int = 500
    grid_steps: tuple = None
    mean: tuple = None
    std: tuple = None
    ref: tuple = None
    seed: int = 0
    T1: float = 0.1
    T2: float = 0.1
    rho: float = 0.05
    tau: float = 0.1

    def __post_init__(self):
        if self.mode not in ("grid", "uniform", "gaussian"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if not (self.rho > 0):
            raise ValueError("rho must be positive")
        if not (0 < self.tau <= 1):
            raise ValueError("tau must lie in (0, 1]")


@dataclass
class CandidateRecord:
    xi2p: np.ndarray
    xi1p: np.ndarray
    traceR: float
    Rdiag: np.ndarray
    ratioA: float
    ratioB: float
    pdA: bool
    pdB: bool
    in_ball: bool
    usable: bool
    screened_ok: bool


@dataclass
class Stage1Report:
    records: list
    verdict: str
    chosen: CandidateRecord
    min_trace: float
    ell2: float
    ref: np.ndarray
    config: SamplerConfig = None


def _ref_of(space, cfg):
    if cfg.ref is None:
        return np.zeros(space.n2)
    ref = np.asarray(cfg.ref, dtype=float)
    if ref.shape != (space.n2,):
        raise ValueError(f"ref has shape {ref.shape}, expected ({space.n2},)")
    return ref


def sample_xi2(space, cfg: SamplerConfig) -> np.ndarray:
    """Candidate draws, shape (count, n2), all inside the box."""
    n2 = space.n2
    if cfg.mode == "grid":
        steps = cfg.grid_steps
        if steps is None:
            # near-uniform budget per dimension
            per = max(2, int(round(cfg.count ** (1.0 / n2))))
            steps = (per,) * n2
        axes = [np.linspace(space.lo2[i], space.hi2[i], int(steps[i])) for i in range(n2)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    rng = np.random.default_rng(cfg.seed)
    if cfg.mode == "uniform":
        return rng.uniform(space.lo2, space.hi2, size=(cfg.count, n2))
    mean = np.asarray(cfg.mean, float) if cfg.mean is not None else _ref_of(space, cfg)
    if cfg.std is None:
        std = np.full(n2, space.ell2 / 2.0 if space.ell2 > 0 else 1.0)
    else:
        std = np.broadcast_to(np.asarray(cfg.std, float), (n2,))
    draws = mean[None, :] + rng.standard_normal((cfg.count, n2)) * std[None, :]
    return np.clip(draws, space.lo2[None, :], space.hi2[None, :])


def _jacs(model, dataset, xi2p):
    dA = model.dA_dxi2_all(dataset.contexts, xi2p)
    if dA is None:
        dA = fd_jac_A_dataset(model, dataset.contexts, xi2p)
    db = model.db_dxi2_all(dataset.contexts, xi2p)
    if db is None:
        db = fd_jac_b_dataset(model, dataset.contexts, xi2p)
    return np.asarray(dA, float), np.asarray(db, float)


def screen_first_order(model, dataset, xi2p, ell2, jacs=None):
    """First-order variation ratios of A and b over the sampling ball.

    ratio = ell2 * rms_k ||d(.)_k/dxi2||_F / rms_k ||(.)_k||_F. A b-vector
    that is identically zero gives ratioB = +inf, which marks the b test as
    vacuous (the caller skips it); if its derivative also vanishes the ratio
    is 0 instead and passes trivially.
    """
    if jacs is None:
        jacs = _jacs(model, dataset, xi2p)
    dA, db = jacs
    N = dataset.N
    A = model.eval_A_all(dataset.contexts, np.asarray(xi2p, float))
    b = model.eval_b_all(dataset.contexts, np.asarray(xi2p, float))
    normA = np.sqrt(np.sum(A * A) / N)
    dnormA = np.sqrt(np.sum(dA * dA) / N)
    normB = np.sqrt(np.sum(b * b) / N)
    dnormB = np.sqrt(np.sum(db * db) / N)
    ratioA = np.inf if normA == 0 and dnormA > 0 else (
        0.0 if normA == 0 else ell2 * dnormA / normA)
    ratioB = np.inf if normB == 0 and dnormB > 0 else (
        0.0 if normB == 0 else ell2 * dnormB / normB)
    return float(ratioA), float(ratioB)


def screen_second_order(model, dataset, xi2p, jacs=None):
    """Positive definiteness of the squared-entry curvature of A and b.

    The curvature of sum of squared entries, kept to its sign-definite part,
    is H = 2 * mean_k sum_entries g g^T with g the entry gradient wrt xi2.
    pd holds when every eigenvalue exceeds 1e-8 * max(1, lambda_max). A
    b-vector with identically zero derivative passes vacuously only when b
    itself is identically zero.
    """
    if jacs is None:
        jacs = _jacs(model, dataset, xi2p)
    dA, db = jacs
    N = dataset.N
    n2 = model.space.n2
    gA = dA.reshape(-1, n2)
    gb = db.reshape(-1, n2)
    H_A = 2.0 * (gA.T @ gA) / N
    H_b = 2.0 * (gb.T @ gb) / N

    def _pd(H):
        w = np.linalg.eigvalsh(H)
        return bool(w[0] > PD_EIG_RTOL * max(1.0, w[-1]))

    pdA = _pd(H_A)
    if not np.any(db):
        b = model.eval_b_all(dataset.contexts, np.asarray(xi2p, float))
        pdB = not np.any(b)
    else:
        pdB = _pd(H_b)
    return pdA, pdB


def evaluate_candidate(model, dataset, xi2p, cfg: SamplerConfig = None,
                       precomputed=None) -> CandidateRecord:
    """Full per-candidate evaluation: linear solve, residual covariance, and
    both screens. A singular linear subproblem yields an unusable record
    (kept, never chosen). precomputed optionally carries (xi1p, Rdiag, ok)
    from a batched sweep."""
    cfg = cfg if cfg is not None else SamplerConfig()
    space = model.space
    xi2p = np.asarray(xi2p, dtype=float)
    ref = _ref_of(space, cfg)
    in_ball = bool(np.linalg.norm(xi2p - ref) <= space.ell2 * (1 + 1e-12))

    jacs = _jacs(model, dataset, xi2p)
    ratioA, ratioB = screen_first_order(model, dataset, xi2p, space.ell2, jacs=jacs)
    pdA, pdB = screen_second_order(model, dataset, xi2p, jacs=jacs)

    if precomputed is not None:
        xi1p, Rdiag, usable = precomputed
        traceR = float(np.sum(Rdiag)) if usable else np.inf
    else:
        try:
            sys = stack(model, dataset, xi2p)
            xi1p = ols(sys)
            R = residual_cov(residuals(sys, xi1p))
            Rdiag = R.r
            traceR = trace_R(R)
            usable = True
        except SingularSystemError:
            xi1p = np.full(space.n1, np.nan)
            Rdiag = np.full(model.m, np.nan)
            traceR = np.inf
            usable = False

    ok = (
        usable and in_ball and ratioA <= cfg.T1
        and (np.isinf(ratioB) or ratioB <= cfg.T2)
        and pdA and pdB
    )
    return CandidateRecord(
        xi2p=xi2p, xi1p=np.asarray(xi1p, float), traceR=float(traceR),
        Rdiag=np.asarray(Rdiag, float), ratioA=ratioA, ratioB=ratioB,
        pdA=pdA, pdB=pdB, in_ball=in_ball, usable=usable, screened_ok=ok,
    )


def uniqueness(records, rho, tau, ell2) -> str:
    """Verdict on the trace map: "UniqueMinimum" when all candidates within
    (1+rho) of the minimum trace sit inside a ball of diameter tau * ell2,
    otherwise "Flat". Needs at least two usable records."""
    usable = [r for r in records if r.usable and np.isfinite(r.traceR)]
    if len(usable) < 2:
        raise Stage1Error(
            f"uniqueness needs at least 2 usable candidates, got {len(usable)}"
        )
    traces = np.array([r.traceR for r in usable])
    mt = traces.min()
    sel = np.nonzero(traces <= (1.0 + rho) * mt)[0]
    pts = np.stack([usable[i].xi2p for i in sel])
    diff = pts[:, None, :] - pts[None, :, :]
    diam = float(np.sqrt(np.max(np.sum(diff * diff, axis=2))))
    return "UniqueMinimum" if diam <= tau * ell2 else "Flat"


def run_stage1(model: CanonicalModel, dataset: Dataset, cfg: SamplerConfig,
               threads: int = 1) -> Stage1Report:
    """Sample, evaluate, screen, and pick the warm start."""
    dataset.require_size(model.space)
    space = model.space
    cands = sample_xi2(space, cfg)

    pre = [None] * len(cands)
    if hasattr(model, "sweep_arrays"):
        A_stack, y_stack = model.sweep_arrays(dataset, cands)
        xi1s, msrs, oks = _kernels.mgs_sweep(A_stack, y_stack)
        # single-channel models: the mean squared residual is the R diagonal
        pre = [(xi1s[i], np.array([msrs[i]]), bool(oks[i])) for i in range(len(cands))]

    def _one(i):
        return evaluate_candidate(model, dataset, cands[i], cfg, precomputed=pre[i])

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(_one, range(len(cands))))
    else:
        records = [_one(i) for i in range(len(cands))]

    verdict = uniqueness(records, cfg.rho, cfg.tau, space.ell2)

    screened = [r for r in records if r.screened_ok]
    if not screened:
        finite = [r for r in records if np.isfinite(r.ratioA)]
        worstA = max((r.ratioA for r in finite), default=np.nan)
        bestA = min((r.ratioA for r in finite), default=np.nan)
        finiteB = [r.ratioB for r in records if np.isfinite(r.ratioB)]
        bestB = min(finiteB, default=np.nan)
        raise Stage1Error(
            f"all {len(records)} candidates failed screening "
            f"(ratioA range [{bestA:.4g}, {worstA:.4g}] vs T1={cfg.T1}, "
            f"best ratioB {bestB:.4g} vs T2={cfg.T2}, "
            f"pdA pass {sum(r.pdA for r in records)}, "
            f"pdB pass {sum(r.pdB for r in records)}, "
            f"in-ball {sum(r.in_ball for r in records)}, "
            f"usable {sum(r.usable for r in records)})"
        )

    best = min(r.traceR for r in screened)
    tied = [r for r in screened if r.traceR <= best * (1 + TIE_RTOL)]
    chosen = min(tied, key=lambda r: float(np.linalg.norm(r.xi2p)))

    return Stage1Report(
        records=records, verdict=verdict, chosen=chosen,
        min_trace=chosen.traceR, ell2=space.ell2, ref=_ref_of(space, cfg),
        config=cfg,
    )


def write_map_csv(path, report: Stage1Report):
    """Candidate map: xi2 components, candidate norm, trace, screen flag."""
    n2 = report.records[0].xi2p.size if report.records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [f"xi2p_{i + 1}" for i in range(n2)]
            + ["norm_xi2p", "traceR", "screened_ok"]
        )
        for r in report.records:
            w.writerow(
                [repr(float(v)) for v in r.xi2p]
                + [
                    repr(float(np.linalg.norm(r.xi2p))),
                    repr(float(r.traceR)),
                    "true" if r.screened_ok else "false",
                ]
            )
