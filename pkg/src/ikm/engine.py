"""Inertial Krasnoselskii-Mann driver with Lyapunov diagnostics.

The iteration is

    y_k     = x_k + alpha_k (x_k - x_{k-1})
    x_{k+1} = (1 - lambda_k) y_k + lambda_k T_k(y_k)

started from ``x_0 = x_1`` so the first inertial term vanishes.  Each step
records a :class:`TraceRow` with the residual ``||y_k - T_k y_k||``, the speed
``||x_k - x_{k-1}||`` and, when a reference fixed point is supplied, the
Lyapunov quantities

    nu_k     = 1/lambda_k - 1
    delta_k  = nu_{k-1} (1 - alpha_{k-1}) ||x_k - x_{k-1}||^2
    Delta_k  = ||x_k - p||^2 - ||x_{k-1} - p||^2          (Delta_1 = 0)
    C_k      = ||x_k - p||^2 - alpha_{k-1} ||x_{k-1} - p||^2 + delta_k
                                                           (C_1 = ||x_1 - p||^2)

The verify_* functions replay the per-iteration inequalities of the
convergence analysis along a finished run; they accept either a
:class:`RunResult` (exact, uses the stored iterates) or a bare list of trace
rows (used when re-analyzing an exported CSV), in which case cross terms are
reconstructed through the identity

    lambda_k^2 ||y_k - T_k y_k||^2 = ||x_{k+1} - x_k||^2
        + alpha_k^2 ||x_k - x_{k-1}||^2
        - 2 alpha_k <x_{k+1} - x_k, x_k - x_{k-1}>.

Runs are strictly sequential; independent runs share no mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .certificates import contraction_constant
from .linalg import Point, is_finite, norm
from .operators import OperatorHandle, residual as op_residual

__all__ = [
    "DivergenceError",
    "InequalityReport",
    "IterateState",
    "RunResult",
    "Schedule",
    "StoppingRule",
    "TraceRow",
    "km_step",
    "picard",
    "run",
    "small_o_check",
    "verify_Ck_monotone",
    "verify_contraction",
    "verify_descent",
    "verify_product_bound",
]

# mixed absolute/relative slack used for every inequality replay; sized to
# absorb double-precision rounding over ~1e5 iterations
DEFAULT_TOL = 1e-9


# --------------------------------------------------------------------------
# schedules and stopping


class Schedule:
    """Parameter sequences ``(alpha_k, lambda_k)`` for ``k >= 1``.

    ``alpha_k`` must be nondecreasing in [0, 1); ``lambda_k`` positive
    (values above 1 are legal so over-relaxed and deliberately infeasible
    runs stay expressible).  Use the ``constant``, ``ramp`` or ``table``
    constructors.
    """

    def __init__(self, alpha_fn, lambda_fn, kind: str, lambda_inf_positive: bool = True):
        self._alpha_fn = alpha_fn
        self._lambda_fn = lambda_fn
        self.kind = kind
        self.lambda_inf_positive = lambda_inf_positive

    @classmethod
    def constant(cls, alpha: float, lam: float) -> "Schedule":
        if not 0.0 <= alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if lam <= 0.0:
            raise ValueError("lambda must be > 0")
        return cls(lambda k: alpha, lambda k: lam, "constant")

    @classmethod
    def ramp(cls, alpha_start: float, alpha_end: float, ramp_iters: int, lam: float) -> "Schedule":
        """Alpha climbs linearly over ``ramp_iters`` steps, then holds."""
        if not (0.0 <= alpha_start <= alpha_end < 1.0):
            raise ValueError("need 0 <= alpha_start <= alpha_end < 1")
        if ramp_iters < 1:
            raise ValueError("ramp_iters must be >= 1")
        if lam <= 0.0:
            raise ValueError("lambda must be > 0")

        def alpha_fn(k: int) -> float:
            if k >= ramp_iters:
                return alpha_end
            return alpha_start + (alpha_end - alpha_start) * (k - 1) / (ramp_iters - 1) \
                if ramp_iters > 1 else alpha_end

        return cls(alpha_fn, lambda k: lam, "ramp-to-constant")

    @classmethod
    def table(cls, alphas: Sequence[float], lambdas: Sequence[float]) -> "Schedule":
        """Explicit per-index values; both tables hold their last entry."""
        alphas = [float(a) for a in alphas]
        lambdas = [float(l) for l in lambdas]
        if not alphas or not lambdas:
            raise ValueError("tables must be non-empty")
        for a in alphas:
            if not 0.0 <= a < 1.0:
                raise ValueError("alpha values must lie in [0, 1)")
        if any(a2 < a1 for a1, a2 in zip(alphas, alphas[1:])):
            raise ValueError("alpha table must be nondecreasing")
        if min(lambdas) <= 0.0:
            raise ValueError("lambda values must be > 0")

        def pick(table):
            def at(k: int) -> float:
                return table[min(k - 1, len(table) - 1)]
            return at

        return cls(pick(alphas), pick(lambdas), "custom-table",
                   lambda_inf_positive=min(lambdas) > 0.0)

    def alpha_at(self, k: int) -> float:
        if k < 1:
            raise ValueError("k must be >= 1")
        return self._alpha_fn(k)

    def lambda_at(self, k: int) -> float:
        if k < 1:
            raise ValueError("k must be >= 1")
        return self._lambda_fn(k)


@dataclass(frozen=True)
class StoppingRule:
    """Stop on residual <= residual_tol, step <= stall_tol, or max_iters."""

    max_iters: int
    residual_tol: float = 0.0
    stall_tol: Optional[float] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.residual_tol < 0.0:
            raise ValueError("residual_tol must be >= 0")


# --------------------------------------------------------------------------
# iteration state and trace


@dataclass
class IterateState:
    """State between steps: index k, the two latest iterates, last y."""

    k: int
    x_prev: Point
    x_curr: Point
    y_curr: Optional[Point] = None

    @classmethod
    def initial(cls, x1: Point) -> "IterateState":
        return cls(k=1, x_prev=x1, x_curr=x1)


@dataclass
class TraceRow:
    """Diagnostics of one iteration (reference-dependent fields may be None)."""

    k: int
    residual: float
    step: float
    nu_k: float
    delta_k: float
    Delta_k: Optional[float] = None
    C_k: Optional[float] = None
    dist_to_ref: Optional[float] = None
    k_step_sq: float = 0.0
    k_res_sq: float = 0.0
    objective: Optional[float] = None
    rate_bound: Optional[float] = None


class DivergenceError(RuntimeError):
    """Raised when an iterate turns non-finite; carries the partial trace."""

    def __init__(self, k: int, partial: "RunResult"):
        super().__init__(f"divergence detected at iteration k={k}")
        self.k = k
        self.partial = partial


@dataclass
class RunResult:
    """Finished (or aborted) run: trace rows plus the exact iterate history."""

    rows: List[TraceRow]
    xs: List[Point]
    ys: List[Point]
    status: str  # converged | max_iters | stalled | diverged
    schedule: Optional[Schedule] = None
    p_ref: Optional[Point] = None
    operator: Optional[OperatorHandle] = None

    @property
    def iterations(self) -> int:
        return len(self.rows)

    @property
    def final_residual(self) -> float:
        return self.rows[-1].residual if self.rows else float("nan")


# --------------------------------------------------------------------------
# stepping


def km_step(state: IterateState, T: OperatorHandle, alpha_k: float, lambda_k: float) -> IterateState:
    """One inertial KM step; bit-identical to ``T.apply`` when alpha=0, lambda=1."""
    if not 0.0 <= alpha_k < 1.0:
        raise ValueError("alpha_k must lie in [0, 1)")
    if lambda_k <= 0.0:
        raise ValueError("lambda_k must be > 0")
    y = state.x_curr if alpha_k == 0.0 else state.x_curr + alpha_k * (state.x_curr - state.x_prev)
    ty = T.apply(y)
    x_new = ty if lambda_k == 1.0 else (1.0 - lambda_k) * y + lambda_k * ty
    if not is_finite(x_new):
        raise DivergenceError(state.k, RunResult([], [], [], "diverged"))
    return IterateState(k=state.k + 1, x_prev=state.x_curr, x_curr=x_new, y_curr=y)


def run(
    T_family: Union[OperatorHandle, Callable[[int], OperatorHandle]],
    x1: Point,
    schedule: Schedule,
    stop: StoppingRule,
    p_ref: Optional[Point] = None,
    objective: Optional[Callable[[Point], float]] = None,
) -> RunResult:
    """Drive the inertial KM iteration and return the full diagnostic trace.

    ``T_family`` is a single operator handle or a map ``k -> handle``.  The
    run is deterministic; divergence raises :class:`DivergenceError` with the
    partial trace attached (intermediate overflow on the way to a detected
    divergence is silenced, since non-finite iterates are handled explicitly).
    """
    if isinstance(T_family, OperatorHandle):
        single = T_family
        fam = lambda k: single  # noqa: E731
    else:
        single = None
        fam = T_family

    x_prev = x_curr = x1
    d_prev = d_curr = norm(x1 - p_ref) if p_ref is not None else None
    xs: List[Point] = [x1]
    ys: List[Point] = []
    rows: List[TraceRow] = []
    status = "max_iters"
    last_alpha = 0.0

    def partial() -> RunResult:
        return RunResult(rows, xs, ys, "diverged", schedule, p_ref, single)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, stop.max_iters + 1):
            a_k = schedule.alpha_at(k)
            l_k = schedule.lambda_at(k)
            if not 0.0 <= a_k < 1.0:
                raise ValueError(f"alpha_{k} = {a_k} outside [0, 1)")
            if a_k < last_alpha:
                raise ValueError(f"alpha sequence decreases at k={k}")
            if l_k <= 0.0:
                raise ValueError(f"lambda_{k} = {l_k} must be > 0")
            last_alpha = a_k

            T = fam(k)
            y = x_curr if a_k == 0.0 else x_curr + a_k * (x_curr - x_prev)
            ty = T.apply(y)
            if not (is_finite(y) and is_finite(ty)):
                raise DivergenceError(k, partial())

            res = norm(y - ty)
            step = norm(x_curr - x_prev)
            nu_k = 1.0 / l_k - 1.0
            if k == 1:
                delta = 0.0
            else:
                a_prev = schedule.alpha_at(k - 1)
                nu_prev = 1.0 / schedule.lambda_at(k - 1) - 1.0
                delta = nu_prev * (1.0 - a_prev) * step * step

            Delta_k = C_k = None
            if d_curr is not None:
                if k == 1:
                    Delta_k, C_k = 0.0, d_curr * d_curr
                else:
                    Delta_k = d_curr * d_curr - d_prev * d_prev
                    C_k = d_curr * d_curr - schedule.alpha_at(k - 1) * d_prev * d_prev + delta

            rows.append(TraceRow(
                k=k,
                residual=res,
                step=step,
                nu_k=nu_k,
                delta_k=delta,
                Delta_k=Delta_k,
                C_k=C_k,
                dist_to_ref=d_curr,
                k_step_sq=k * step * step,
                k_res_sq=k * res * res,
                objective=objective(x_curr) if objective is not None else None,
            ))
            ys.append(y)

            if res <= stop.residual_tol:
                status = "converged"
                break
            if stop.stall_tol is not None and k > 1 and step <= stop.stall_tol:
                status = "stalled"
                break

            x_new = ty if l_k == 1.0 else (1.0 - l_k) * y + l_k * ty
            if not is_finite(x_new):
                raise DivergenceError(k, partial())
            xs.append(x_new)
            x_prev, x_curr = x_curr, x_new
            if p_ref is not None:
                d_prev, d_curr = d_curr, norm(x_curr - p_ref)

    return RunResult(rows, xs, ys, status, schedule, p_ref, single)


def picard(T: OperatorHandle, x0: Point, tol: float, max_iters: int) -> RunResult:
    """Plain fixed-point iteration ``x <- T x`` without trace (reference runs)."""
    x = x0
    for k in range(1, max_iters + 1):
        tx = T.apply(x)
        if not is_finite(tx):
            raise DivergenceError(k, RunResult([], [x], [], "diverged", operator=T))
        r = norm(x - tx)
        if r <= tol:
            row = TraceRow(k=k, residual=r, step=0.0, nu_k=0.0, delta_k=0.0,
                           k_step_sq=0.0, k_res_sq=k * r * r)
            return RunResult([row], [x], [], "converged", operator=T)
        x = tx
    row = TraceRow(k=max_iters, residual=norm(x - T.apply(x)), step=0.0, nu_k=0.0,
                   delta_k=0.0)
    return RunResult([row], [x], [], "max_iters", operator=T)


# --------------------------------------------------------------------------
# inequality replays


@dataclass
class InequalityReport:
    """Per-index lhs/rhs evaluation of one inequality along a trace."""

    name: str
    ks: List[int]
    lhs: List[float]
    rhs: List[float]
    violations: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def checked(self) -> int:
        return len(self.ks)


def _unpack(trace, p_ref, schedule):
    if isinstance(trace, RunResult):
        rows = trace.rows
        xs = trace.xs
        ys = trace.ys
        schedule = schedule or trace.schedule
        p_ref = p_ref if p_ref is not None else trace.p_ref
        op = trace.operator
    else:
        rows, xs, ys, op = list(trace), None, None, None
    if schedule is None:
        raise ValueError("a schedule is required")
    return rows, xs, ys, op, p_ref, schedule


def _require_ref(rows):
    if any(r.dist_to_ref is None for r in rows):
        raise ValueError("trace lacks dist_to_ref; rerun with p_ref")


def _check_ref_fixed(op, p_ref):
    if op is not None and op_residual(op, p_ref) > 1e-10:
        raise ValueError("p_ref is not a fixed point (residual > 1e-10)")


def _second_diff_sq_from_rows(rows, i, a_k, l_k):
    """||x_{k+1} - 2 x_k + x_{k-1}||^2 reconstructed from scalar columns."""
    if a_k == 0.0:
        return 0.0
    step_k = rows[i].step
    step_next = rows[i + 1].step
    res_k = rows[i].residual
    cross = (step_next ** 2 + a_k ** 2 * step_k ** 2 - l_k ** 2 * res_k ** 2) / (2.0 * a_k)
    return max(step_next ** 2 + step_k ** 2 - 2.0 * cross, 0.0)


def verify_descent(trace, p_ref: Optional[Point] = None, schedule: Optional[Schedule] = None,
                  tol: float = DEFAULT_TOL) -> InequalityReport:
    """Replay the one-step descent inequality along the trace.

    At each k it checks

        Delta_{k+1} + delta_{k+1} + nu_k alpha_k ||x_{k+1} - 2 x_k + x_{k-1}||^2
            <= alpha_k Delta_k
               + [alpha_k (1 + alpha_k) + nu_k alpha_k (1 - alpha_k)] ||x_k - x_{k-1}||^2

    with slack ``tol * (1 + |rhs|)``.  Requires a reference fixed point; when
    the trace carries its operator, ``p_ref`` is validated against it.
    """
    rows, xs, _, op, p_ref, schedule = _unpack(trace, p_ref, schedule)
    if p_ref is not None:
        _check_ref_fixed(op, p_ref)

    report = InequalityReport("descent", [], [], [])
    if xs is not None:
        if p_ref is None:
            raise ValueError("p_ref is required")
        dists2 = [norm(x - p_ref) ** 2 for x in xs]
        steps2 = [0.0] + [norm(xs[j] - xs[j - 1]) ** 2 for j in range(1, len(xs))]
        for k in range(1, len(xs)):
            a_k = schedule.alpha_at(k)
            l_k = schedule.lambda_at(k)
            nu_k = 1.0 / l_k - 1.0
            x_prev = xs[k - 2] if k >= 2 else xs[0]
            second = xs[k] - 2.0 * xs[k - 1] + x_prev
            delta_next = nu_k * (1.0 - a_k) * steps2[k]
            Delta_next = dists2[k] - dists2[k - 1]
            Delta_k = 0.0 if k == 1 else dists2[k - 1] - dists2[k - 2]
            step_k_sq = 0.0 if k == 1 else steps2[k - 1]
            lhs = Delta_next + delta_next + nu_k * a_k * norm(second) ** 2
            rhs = a_k * Delta_k + (a_k * (1.0 + a_k) + nu_k * a_k * (1.0 - a_k)) * step_k_sq
            report.ks.append(k)
            report.lhs.append(lhs)
            report.rhs.append(rhs)
            if lhs > rhs + tol * (1.0 + abs(rhs)):
                report.violations.append(k)
        return report

    _require_ref(rows)
    for i in range(len(rows) - 1):
        k = rows[i].k
        a_k = schedule.alpha_at(k)
        l_k = schedule.lambda_at(k)
        nu_k = 1.0 / l_k - 1.0
        d_k = rows[i].dist_to_ref ** 2
        d_next = rows[i + 1].dist_to_ref ** 2
        d_prevsq = rows[i - 1].dist_to_ref ** 2 if i >= 1 else d_k
        Delta_next = d_next - d_k
        Delta_k = 0.0 if k == 1 else d_k - d_prevsq
        lhs = Delta_next + rows[i + 1].delta_k \
            + nu_k * a_k * _second_diff_sq_from_rows(rows, i, a_k, l_k)
        rhs = a_k * Delta_k + (a_k * (1.0 + a_k) + nu_k * a_k * (1.0 - a_k)) * rows[i].step ** 2
        report.ks.append(k)
        report.lhs.append(lhs)
        report.rhs.append(rhs)
        if lhs > rhs + tol * (1.0 + abs(rhs)):
            report.violations.append(k)
    return report


def verify_Ck_monotone(trace, tol: float = DEFAULT_TOL) -> Optional[int]:
    """First k violating ``C_{k+1} <= C_k + tol (1 + C_k)`` / ``C_k >= -tol``, else None."""
    rows = trace.rows if isinstance(trace, RunResult) else list(trace)
    if any(r.C_k is None for r in rows):
        raise ValueError("trace lacks C_k; rerun with p_ref")
    for i, r in enumerate(rows):
        if r.C_k < -tol:
            return r.k
        if i + 1 < len(rows) and rows[i + 1].C_k > r.C_k + tol * (1.0 + r.C_k):
            return r.k
    return None


def verify_contraction(trace, q: float, xi: float, p_ref: Optional[Point] = None,
                       schedule: Optional[Schedule] = None,
                       tol: float = DEFAULT_TOL) -> InequalityReport:
    """Replay the per-step contraction bound for q-quasi-contractive runs:

        ||x_{k+1} - p||^2 <= Q(lambda_k, q, xi) ||y_k - p||^2
                             - xi lambda_k (1 - lambda_k) ||y_k - T y_k||^2.
    """
    rows, xs, ys, op, p_ref, schedule = _unpack(trace, p_ref, schedule)
    if p_ref is not None:
        _check_ref_fixed(op, p_ref)

    report = InequalityReport("contraction", [], [], [])
    if xs is not None and ys is not None:
        if p_ref is None:
            raise ValueError("p_ref is required")
        n_steps = len(xs) - 1  # steps with a recorded x_{k+1}
        for k in range(1, n_steps + 1):
            l_k = schedule.lambda_at(k)
            Qk = contraction_constant(l_k, q, xi)
            lhs = norm(xs[k] - p_ref) ** 2
            rhs = Qk * norm(ys[k - 1] - p_ref) ** 2 \
                - xi * l_k * (1.0 - l_k) * rows[k - 1].residual ** 2
            report.ks.append(k)
            report.lhs.append(lhs)
            report.rhs.append(rhs)
            if lhs > rhs + tol * (1.0 + abs(rhs)):
                report.violations.append(k)
        return report

    _require_ref(rows)
    for i in range(len(rows) - 1):
        k = rows[i].k
        a_k = schedule.alpha_at(k)
        l_k = schedule.lambda_at(k)
        Qk = contraction_constant(l_k, q, xi)
        d_k = rows[i].dist_to_ref ** 2
        d_prevsq = rows[i - 1].dist_to_ref ** 2 if i >= 1 else d_k
        y_dist_sq = (1.0 + a_k) * d_k - a_k * d_prevsq + a_k * (1.0 + a_k) * rows[i].step ** 2
        lhs = rows[i + 1].dist_to_ref ** 2
        rhs = Qk * y_dist_sq - xi * l_k * (1.0 - l_k) * rows[i].residual ** 2
        report.ks.append(k)
        report.lhs.append(lhs)
        report.rhs.append(rhs)
        if lhs > rhs + tol * (1.0 + abs(rhs)):
            report.violations.append(k)
    return report


def verify_product_bound(trace, q: float, xi: float, p_ref: Optional[Point] = None,
                         schedule: Optional[Schedule] = None,
                         tol: float = DEFAULT_TOL) -> InequalityReport:
    """Replay the certificate product bound

        ||x_{k+1} - p||^2 - alpha_k ||x_k - p||^2 + xi delta_{k+1}
            <= prod_{j<=k} Q(lambda_j, q, xi) * ||x_1 - p||^2.
    """
    rows, _, _, op, p_ref, schedule = _unpack(trace, p_ref, schedule)
    if p_ref is not None:
        _check_ref_fixed(op, p_ref)
    _require_ref(rows)

    report = InequalityReport("product_bound", [], [], [])
    d1_sq = rows[0].dist_to_ref ** 2
    prod = 1.0
    for i in range(len(rows) - 1):
        k = rows[i].k
        a_k = schedule.alpha_at(k)
        prod *= contraction_constant(schedule.lambda_at(k), q, xi)
        lhs = rows[i + 1].dist_to_ref ** 2 - a_k * rows[i].dist_to_ref ** 2 \
            + xi * rows[i + 1].delta_k
        rhs = prod * d1_sq
        report.ks.append(k)
        report.lhs.append(lhs)
        report.rhs.append(rhs)
        if lhs > rhs + tol * (1.0 + abs(rhs)):
            report.violations.append(k)
    return report


def small_o_check(zeta: Sequence[float]) -> bool:
    """Finite-sample proxy for ``k * zeta_k -> 0`` on summable inputs.

    ``zeta`` must be positive and nonincreasing (validated; tiny relative
    upticks at rounding level are tolerated).  Returns True when the maximum
    of ``k * zeta_k`` over the last quartile is below 10% of its maximum over
    the first quartile.  A documented heuristic, not a limit statement.
    """
    zs = [float(z) for z in zeta]
    if len(zs) < 4:
        raise ValueError("need at least 4 values")
    if min(zs) <= 0.0:
        raise ValueError("values must be positive")
    for a, b in zip(zs, zs[1:]):
        if b > a * (1.0 + 1e-12):
            raise ValueError("sequence is not nonincreasing")
    kz = [(i + 1) * z for i, z in enumerate(zs)]
    quart = max(1, len(zs) // 4)
    return max(kz[-quart:]) < 0.1 * max(kz[:quart])
