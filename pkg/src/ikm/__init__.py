"""Inertial Krasnoselskii-Mann iterations with built-in certificates.

The package drives relaxed, inertial fixed-point iterations for families of
(quasi-)nonexpansive operators, evaluates the parameter-feasibility
inequalities and worst-case rate constants governing them, replays the
per-iteration Lyapunov inequalities along finished runs, and ships six
concrete splitting schemes with deterministic benchmark problems.
"""

from .certificates import (
    CheckResult,
    RelaxationSeqReport,
    NesterovBound,
    ParamPoint,
    contraction_constant,
    RateBound,
    check_relaxation_constant,
    check_relaxation_seq,
    check_contraction_condition,
    lambda_alpha_1,
    lambda_alpha_q,
    lambda_grid,
    nesterov_lambda_bound,
    feasibility_poly,
    rate_bound,
    rate_bound_sum,
    strongly_convex_gradient_factor,
    xi_threshold,
)
from .engine import (
    DivergenceError,
    InequalityReport,
    IterateState,
    RunResult,
    Schedule,
    StoppingRule,
    TraceRow,
    km_step,
    picard,
    run,
    small_o_check,
    verify_Ck_monotone,
    verify_contraction,
    verify_descent,
    verify_product_bound,
)
from .linalg import (
    BlockVector,
    LinearMap,
    combine,
    dot,
    norm,
    operator_norm_estimate,
    solve_spd,
)
from .operators import (
    OperatorHandle,
    ProxFunction,
    box,
    davis_yin_op,
    douglas_rachford_op,
    forward_backward_op,
    gradient_step_op,
    l1,
    l2_ball,
    primal_dual_op,
    prox,
    prox_conjugate,
    proximal_op,
    quadratic,
    residual,
    split_dr_op,
    zero,
)
from .problems import (
    BenchmarkInstance,
    SpectralData,
    make_feasibility,
    make_lasso,
    make_quadratic,
    make_three_term,
    make_tv1d,
)
from .rng import SplitMix64

__version__ = "0.1.0"
