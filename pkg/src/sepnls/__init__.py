"""Two-stage estimation for measurement models affine in part of the
parameter vector: residual-sampling initialization over the nonlinear
parameters, then box-constrained maximum-likelihood refinement with
alternating noise-covariance estimation."""

from .canon import (
    CanonicalModel,
    Dataset,
    DiagCov,
    InvalidModelError,
    OutOfBoundsError,
    ParamSpace,
    ReducedAccuracyWarning,
    SampleContext,
    fd_jacobian_A,
    fd_jacobian_b,
    predict,
)
from .linlsq import (
    SingularSystemError,
    StackedSystem,
    ols,
    residual_cov,
    residuals,
    stack,
    trace_R,
    wls,
)
from .stage1 import (
    CandidateRecord,
    SamplerConfig,
    Stage1Error,
    Stage1Report,
    evaluate_candidate,
    run_stage1,
    sample_xi2,
    screen_first_order,
    screen_second_order,
    uniqueness,
    write_map_csv,
)
from .stage2 import (
    EstimateResult,
    SolverConfig,
    cost,
    result_to_json,
    run_two_stage,
    solve_inner,
    solve_joint,
    solve_xi2_only,
    stddevs,
    update_R,
)
from .bounds import (
    BoundsReport,
    bounds_report,
    bracket_check,
    error_bound,
    estimate_lipschitz,
)
from .bench import (
    McConfig,
    McReport,
    classic_nlp,
    hk_step1,
    hk_step2,
    run_mc,
)
from . import models
from ._kernels import HAVE_NATIVE

__version__ = "0.1.0"
