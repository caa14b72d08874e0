"""Stage 2: constrained maximum-likelihood refinement.

Minimizes J(xi) = 1/2 sum_k ||z_k - A(xi2) xi1 - b(xi2)||^2_{R^-1}
                + (N/2) log det R
over the parameter boxes, alternating with closed-form re-estimation of the
diagonal R from current residuals until the relative change of every variance
drops below r_tol. Two refinement modes share one projected Levenberg-
Marquardt core: "xi2-only" keeps the linear solve inside the objective (valid
when stage 1 reports a unique minimum), "joint" optimizes the concatenated
parameter vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .canon import DiagCov, ReducedAccuracyWarning, fd_jac_A_dataset, fd_jac_b_dataset
from .linlsq import SingularSystemError, residual_cov, residuals, stack, wls
from .stage1 import SamplerConfig, Stage1Report, run_stage1

__all__ = [
    "SolverConfig",
    "InnerInfo",
    "EstimateResult",
    "cost",
    "update_R",
    "solve_inner",
    "solve_xi2_only",
    "solve_joint",
    "stddevs",
    "run_two_stage",
    "result_to_json",
]


@dataclass(frozen=True)
class SolverConfig:
    """Refinement settings.

    mode: "auto" picks "xi2-only" on a UniqueMinimum verdict and "joint"
    otherwise; the explicit modes force the choice. grad_tol bounds the
    scale-free first-order measure (largest cosine between the residual and a
    box-free Jacobian column), step_tol is relative to the parameter norm.
    Alternation stops when every diagonal entry of R changes by less than
    r_tol relative, or after max_outer_alternations rounds (flagged, not
    raised).
    """

    mode: str = "auto"
    max_outer_alternations: int = 20
    r_tol: float = 0.05
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    max_iters: int = 200
    seed: int = None

    def __post_init__(self):
        if self.mode not in ("auto", "xi2-only", "joint"):
            raise ValueError(f"unknown solver mode {self.mode!r}")


@dataclass
class InnerInfo:
    iters: int
    n_evals: int
    converged: bool
    pg_norm: float
    cost_trace: list
    status: str


@dataclass
class EstimateResult:
    xi1: np.ndarray
    xi2: np.ndarray
    Rdiag: np.ndarray
    stddev: np.ndarray
    final_cost: float
    alternations: int
    inner_iters: int
    converged: bool
    mode_used: str
    r_delta_last: float
    cost_trace: list = field(default_factory=list)
    stddev_clipped: bool = False
    model_id: str = ""
    seed: int = None
    verdict: str = ""


def cost(model, dataset, xi1, xi2, R: DiagCov) -> float:
    """Negative log-likelihood up to a constant: weighted residual sum plus
    the (N/2) log det R term."""
    sys = stack(model, dataset, xi2)
    v = residuals(sys, xi1)
    per_channel = np.sum(v * v, axis=0)
    return float(0.5 * np.sum(per_channel / R.r) + 0.5 * dataset.N * R.logdet())


def update_R(model, dataset, xi1, xi2) -> DiagCov:
    """Closed-form minimizer of the cost over diagonal R at fixed xi:
    r_j = (1/N) sum_k v_kj^2 (floored)."""
    sys = stack(model, dataset, xi2)
    return residual_cov(residuals(sys, xi1))


def _fd_resid_jac(resid_fn, x, r0):
    n = x.size
    J = np.empty((r0.size, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        rp = resid_fn(xp)
        rm = resid_fn(xm)
        J[:, i] = (rp - rm) / (2 * h)
    return J, 2 * n


def _projected_gradient(x, g, lo, hi):
    pg = g.copy()
    eps = 1e-12
    at_lo = np.zeros(x.shape, dtype=bool)
    at_hi = np.zeros(x.shape, dtype=bool)
    m = np.isfinite(lo)
    at_lo[m] = x[m] <= lo[m] + eps * np.maximum(1.0, np.abs(lo[m]))
    m = np.isfinite(hi)
    at_hi[m] = x[m] >= hi[m] - eps * np.maximum(1.0, np.abs(hi[m]))
    pg[at_lo & (pg > 0)] = 0.0
    pg[at_hi & (pg < 0)] = 0.0
    return pg


def _first_order_crit(pg, J, r):
    """Scale-invariant first-order measure: the largest cosine of the angle
    between the residual and a Jacobian column, restricted to directions the
    box still allows. Zero residual gives zero by convention."""
    if pg.size == 0:
        return 0.0
    denom = np.linalg.norm(r) * np.linalg.norm(J, axis=0)
    cos = np.zeros_like(pg)
    mask = denom > 0
    cos[mask] = np.abs(pg[mask]) / denom[mask]
    return float(np.max(cos))


def solve_inner(resid_fn, x0, lo, hi, cfg: SolverConfig, jac_fn=None,
                cost_floor=0.0):
    """Projected Levenberg-Marquardt on a residual vector function.

    Steps solve (J^T J + lam D) d = -J^T r, are clipped to the box, and are
    accepted only when the cost 1/2 ||r||^2 decreases; lam shrinks on accepted
    steps and grows otherwise. Stops when the scale-invariant first-order
    measure (largest residual/Jacobian-column cosine over free directions)
    falls below grad_tol, on a small accepted step, on iteration exhaustion,
    or on a fully stalled damping loop. A positive cost_floor declares
    convergence outright once the cost drops below it; callers set it to the
    level where the residual is negligible against the data scale, which is
    where an exact fit bottoms out in floating point.

    Returns (x, InnerInfo). The cost trace contains the accepted costs in
    order and is non-increasing by construction.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    x = np.clip(np.asarray(x0, float).copy(), lo, hi)
    r = resid_fn(x)
    n_evals = 1
    if r is None or not np.all(np.isfinite(r)):
        raise ValueError("initial residual is not finite")
    c = 0.5 * float(r @ r)
    trace = [c]
    lam = 1e-3
    converged = False
    status = "max_iters"
    pg_norm = np.inf
    iters = 0

    if c <= cost_floor:
        return x, InnerInfo(
            iters=0, n_evals=n_evals, converged=True,
            pg_norm=0.0, cost_trace=trace, status="cost_floor",
        )

    for _ in range(cfg.max_iters):
        iters += 1
        if jac_fn is not None:
            J = jac_fn(x, r)
        else:
            J, extra = _fd_resid_jac(resid_fn, x, r)
            n_evals += extra
        g = J.T @ r
        pg = _projected_gradient(x, g, lo, hi)
        pg_norm = _first_order_crit(pg, J, r)
        if pg_norm <= cfg.grad_tol:
            converged = True
            status = "gradient"
            break

        # dimensions pinned at a bound with an outward gradient leave the
        # system; stepping only in the free face avoids zigzag along bounds
        free = pg != 0.0
        if not np.any(free):
            free = np.ones_like(pg, dtype=bool)
        Jf = J[:, free]
        gf = g[free]
        JtJ = Jf.T @ Jf
        D = np.diag(np.maximum(np.diag(JtJ), 1e-12))
        accepted = False
        while lam <= 1e12:
            try:
                df = np.linalg.solve(JtJ + lam * D, -gf)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            step = np.zeros_like(x)
            step[free] = df
            xn = np.clip(x + step, lo, hi)
            if not np.any(xn != x):
                lam *= 10.0
                continue
            rn = resid_fn(xn)
            n_evals += 1
            if rn is not None and np.all(np.isfinite(rn)):
                cn = 0.5 * float(rn @ rn)
                if cn <= c * (1.0 - 1e-12):
                    accepted = True
                    break
            lam *= 4.0
        if not accepted:
            status = "stalled"
            break
        moved = float(np.linalg.norm(xn - x))
        x, r, c = xn, rn, cn
        trace.append(c)
        lam = max(lam / 3.0, 1e-14)
        if c <= cost_floor:
            converged = True
            status = "cost_floor"
            break
        if moved <= cfg.step_tol * (1.0 + float(np.linalg.norm(x))):
            converged = True
            status = "step"
            break

    if not converged and status in ("stalled", "max_iters"):
        # a stall at a box face can still satisfy the first-order test
        if jac_fn is not None:
            J = jac_fn(x, r)
        else:
            J, extra = _fd_resid_jac(resid_fn, x, r)
            n_evals += extra
        pg = _projected_gradient(x, J.T @ r, lo, hi)
        pg_norm = _first_order_crit(pg, J, r)
        if pg_norm <= cfg.grad_tol:
            converged = True
            status = "gradient"

    return x, InnerInfo(
        iters=iters, n_evals=n_evals, converged=converged,
        pg_norm=pg_norm, cost_trace=trace, status=status,
    )


def _weights(R, N):
    return np.tile(1.0 / np.sqrt(R.r), N)


def _alternate(model, dataset, xi1_0, xi2_0, R0, mode, cfg: SolverConfig):
    """Shared alternation loop for both refinement modes."""
    space = model.space
    N = dataset.N
    R = R0 if isinstance(R0, DiagCov) else DiagCov(np.asarray(R0, float))
    xi1 = np.asarray(xi1_0, float).copy()
    xi2 = np.clip(np.asarray(xi2_0, float), space.lo2, space.hi2)

    cost_trace = [cost(model, dataset, xi1, xi2, R)]
    inner_total = 0
    alternations = 0
    delta = np.inf
    inner_ok = False
    sys_cache = {}

    def _stack(xi2v):
        key = xi2v.tobytes()
        hit = sys_cache.get(key)
        if hit is None:
            if len(sys_cache) > 8:
                sys_cache.clear()
            hit = stack(model, dataset, xi2v)
            sys_cache[key] = hit
        return hit

    for _ in range(cfg.max_outer_alternations):
        alternations += 1
        w_big = _weights(R, N)
        # below this level the weighted residual is float noise against the
        # weighted data, which is where an exact fit lands
        zw = float(np.linalg.norm(_stack(xi2).z_big * w_big))
        floor = 0.5 * (1e-12 * zw) ** 2

        if mode == "xi2-only":
            def resid(x2):
                sysv = _stack(np.asarray(x2, float))
                try:
                    x1 = wls(sysv, R)
                except SingularSystemError:
                    return None
                return (sysv.z_big - sysv.b_big - sysv.A_big @ x1) * w_big

            try:
                xi2, info = solve_inner(resid, xi2, space.lo2, space.hi2, cfg,
                                        cost_floor=floor)
            except ValueError:
                break
            try:
                xi1 = wls(_stack(xi2), R)
            except SingularSystemError:
                break
        else:
            n1 = space.n1

            def resid(theta):
                sysv = _stack(np.asarray(theta[n1:], float))
                return (sysv.z_big - sysv.b_big - sysv.A_big @ theta[:n1]) * w_big

            def jac(theta, r):
                xi2v = np.asarray(theta[n1:], float)
                sysv = _stack(xi2v)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ReducedAccuracyWarning)
                    dA = model.dA_dxi2_all(dataset.contexts, xi2v)
                    if dA is None:
                        dA = fd_jac_A_dataset(model, dataset.contexts, xi2v)
                    db = model.db_dxi2_all(dataset.contexts, xi2v)
                    if db is None:
                        db = fd_jac_b_dataset(model, dataset.contexts, xi2v)
                dvec = np.einsum("kmip,i->kmp", dA, theta[:n1]) + db
                J = np.empty((sysv.A_big.shape[0], theta.size))
                J[:, :n1] = -sysv.A_big * w_big[:, None]
                J[:, n1:] = -dvec.reshape(-1, space.n2) * w_big[:, None]
                return J

            theta0 = np.concatenate([xi1, xi2])
            lo = np.concatenate([space.lo1, space.lo2])
            hi = np.concatenate([space.hi1, space.hi2])
            try:
                theta, info = solve_inner(resid, theta0, lo, hi, cfg,
                                          jac_fn=jac, cost_floor=floor)
            except ValueError:
                break
            xi1, xi2 = theta[:n1], theta[n1:]

        inner_total += info.iters
        inner_ok = info.converged

        R_new = update_R(model, dataset, xi1, xi2)
        delta = float(np.max(np.abs(R_new.r - R.r) / R.r))
        R = R_new
        cost_trace.append(cost(model, dataset, xi1, xi2, R))
        if delta < cfg.r_tol:
            break

    if mode == "xi2-only":
        # final linear solve under the final covariance estimate
        try:
            xi1 = wls(_stack(xi2), R)
        except SingularSystemError:
            pass
        cost_trace.append(cost(model, dataset, xi1, xi2, R))

    converged = bool(delta < cfg.r_tol and inner_ok)
    final_cost = cost(model, dataset, xi1, xi2, R)
    sd, clipped = stddevs(model, dataset, xi1, xi2, R)
    return EstimateResult(
        xi1=xi1, xi2=xi2, Rdiag=R.r.copy(), stddev=sd, final_cost=final_cost,
        alternations=alternations, inner_iters=inner_total, converged=converged,
        mode_used=mode, r_delta_last=delta, cost_trace=cost_trace,
        stddev_clipped=clipped, model_id=model.model_id, seed=cfg.seed,
    )


def _unpack_warm(warm):
    if isinstance(warm, Stage1Report):
        c = warm.chosen
        return c.xi1p, c.xi2p, DiagCov(c.Rdiag)
    xi1, xi2, R = warm
    return (np.asarray(xi1, float), np.asarray(xi2, float),
            R if isinstance(R, DiagCov) else DiagCov(np.asarray(R, float)))


def solve_xi2_only(model, dataset, warm, cfg: SolverConfig) -> EstimateResult:
    """Refine xi2 with the linear solve nested inside the objective.

    Intended for a UniqueMinimum stage-1 verdict (the nested solve assumes
    the linear subproblem tracks a single basin). Non-convergence within the
    alternation budget is flagged on the result, never raised.
    """
    xi1, xi2, R = _unpack_warm(warm)
    return _alternate(model, dataset, xi1, xi2, R, "xi2-only", cfg)


def solve_joint(model, dataset, warm, cfg: SolverConfig) -> EstimateResult:
    """Refine xi1 and xi2 jointly; valid for any stage-1 verdict."""
    xi1, xi2, R = _unpack_warm(warm)
    return _alternate(model, dataset, xi1, xi2, R, "joint", cfg)


def stddevs(model, dataset, xi1, xi2, R: DiagCov):
    """Reported standard deviations: sqrt of the diagonal of the inverse of
    the central-difference Hessian of the cost over the concatenated
    parameters at fixed R. Eigenvalues below 1e-10 of the largest are clipped
    (flagged) so near-singular information still yields finite output.

    Returns (stddev vector of length n1+n2, clipped flag).
    """
    space = model.space
    theta = np.concatenate([np.asarray(xi1, float), np.asarray(xi2, float)])
    n = theta.size
    n1 = space.n1

    def f(th):
        return cost(model, dataset, th[:n1], th[n1:], R)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReducedAccuracyWarning)
        h = 1e-4 * np.maximum(1.0, np.abs(theta))
        f0 = f(theta)
        H = np.empty((n, n))
        fp = np.empty(n)
        fm = np.empty(n)
        for i in range(n):
            tp = theta.copy()
            tp[i] += h[i]
            tm = theta.copy()
            tm[i] -= h[i]
            fp[i] = f(tp)
            fm[i] = f(tm)
            H[i, i] = (fp[i] - 2.0 * f0 + fm[i]) / h[i] ** 2
        for i in range(n):
            for j in range(i + 1, n):
                tpp = theta.copy()
                tpp[[i, j]] += [h[i], h[j]]
                tpm = theta.copy()
                tpm[i] += h[i]
                tpm[j] -= h[j]
                tmp = theta.copy()
                tmp[i] -= h[i]
                tmp[j] += h[j]
                tmm = theta.copy()
                tmm[[i, j]] -= [h[i], h[j]]
                H[i, j] = H[j, i] = (
                    f(tpp) - f(tpm) - f(tmp) + f(tmm)
                ) / (4.0 * h[i] * h[j])

    w, V = np.linalg.eigh(H)
    wmax = float(w[-1])
    if wmax <= 0:
        return np.full(n, np.nan), True
    floor = 1e-10 * wmax
    clipped = bool(np.any(w < floor))
    w = np.maximum(w, floor)
    cov = (V / w[None, :]) @ V.T
    return np.sqrt(np.maximum(np.diag(cov), 0.0)), clipped


def run_two_stage(model, dataset, s1cfg: SamplerConfig, s2cfg: SolverConfig,
                  threads: int = 1):
    """Initialization plus refinement; auto mode dispatches on the verdict.

    Returns (Stage1Report, EstimateResult).
    """
    report = run_stage1(model, dataset, s1cfg, threads=threads)
    mode = s2cfg.mode
    if mode == "auto":
        mode = "xi2-only" if report.verdict == "UniqueMinimum" else "joint"
    warm = (report.chosen.xi1p, report.chosen.xi2p, DiagCov(report.chosen.Rdiag))
    if mode == "xi2-only":
        result = solve_xi2_only(model, dataset, warm, s2cfg)
    else:
        result = solve_joint(model, dataset, warm, s2cfg)
    result.verdict = report.verdict
    return report, result


def result_to_json(result: EstimateResult) -> dict:
    """JSON-ready dict with the documented result fields."""
    return {
        "model_id": result.model_id,
        "mode_used": result.mode_used,
        "xi1": [float(v) for v in result.xi1],
        "xi2": [float(v) for v in result.xi2],
        "stddev": [float(v) for v in result.stddev],
        "Rdiag": [float(v) for v in result.Rdiag],
        "final_cost": float(result.final_cost),
        "alternations": int(result.alternations),
        "converged": bool(result.converged),
        "seed": result.seed,
        "inner_iters": int(result.inner_iters),
        "r_delta_last": float(result.r_delta_last),
        "verdict": result.verdict,
        "stddev_clipped": bool(result.stddev_clipped),
    }
