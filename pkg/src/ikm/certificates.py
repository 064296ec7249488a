"""Closed-form feasibility certificates and worst-case rate constants.

Every parameter inequality used by the inertial KM analysis is evaluated
here as a pure function: the constant-parameter relaxation bound, its
sequence form, the quasi-contractive condition and its boundary curve
``lambda_alpha_q`` (the unique root of the quadratic ``feasibility_poly`` in (0, 1)),
the auxiliary-weight threshold ``xi_threshold`` and the geometric rate
envelope.  Checks report (lhs, rhs, margin); strict inequalities are
satisfied only with a strictly positive margin, the non-strict contraction
condition accepts margin zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

__all__ = [
    "CheckResult",
    "RelaxationSeqReport",
    "NesterovBound",
    "ParamPoint",
    "RateBound",
    "contraction_constant",
    "check_relaxation_constant",
    "check_relaxation_seq",
    "check_contraction_condition",
    "lambda_alpha_1",
    "lambda_alpha_q",
    "lambda_grid",
    "lambda_grid_points",
    "nesterov_lambda_bound",
    "feasibility_poly",
    "feasibility_poly_coefficients",
    "rate_bound",
    "rate_bound_sum",
    "strongly_convex_gradient_factor",
    "xi_threshold",
]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one inequality: margin = rhs - lhs, satisfied per strictness."""

    name: str
    lhs: float
    rhs: float
    satisfied: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class ParamPoint:
    """One (alpha, lambda, q, xi, gamma) parameter choice.

    ``eta = gamma * lambda`` is the effective relaxation used by feasibility
    checks when the operator's averagedness is known.
    """

    alpha: float
    lam: float
    q: float = 1.0
    xi: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.lam <= 0.0:
            raise ValueError("lambda must be > 0")
        if not 0.0 < self.q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("xi must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def eta(self) -> float:
        return self.gamma * self.lam


def contraction_constant(lam: float, q: float, xi: float) -> float:
    """Contraction constant of one relaxed step against a q-contractive map.

    Two algebraically identical forms are evaluated and cross-checked:
    ``xi (1 - lam + lam q^2) + (1 - xi)(1 - lam + lam q)^2`` and
    ``(1 - lam + lam q)^2 + xi lam (1 - lam)(1 - q)^2``.  Decreasing in
    ``lam``, increasing in ``q`` and ``xi``.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("lambda must lie in (0, 1]")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    base = 1.0 - lam + lam * q
    form1 = xi * (1.0 - lam + lam * q * q) + (1.0 - xi) * base * base
    form2 = base * base + xi * lam * (1.0 - lam) * (1.0 - q) ** 2
    if abs(form1 - form2) > 1e-14:
        raise AssertionError(f"Q forms disagree: {form1!r} vs {form2!r}")
    return form2


def check_relaxation_constant(alpha: float, lambda_eff: float) -> CheckResult:
    """Constant-parameter relaxation bound ``lam (1 - a + 2 a^2) < (1 - a)^2``.

    ``lambda_eff`` should be the effective relaxation (gamma * lambda) when
    the operator's averagedness gamma is known.  Strict.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if lambda_eff <= 0.0:
        raise ValueError("lambda must be > 0")
    lhs = lambda_eff * (1.0 - alpha + 2.0 * alpha * alpha)
    rhs = (1.0 - alpha) ** 2
    return CheckResult("relaxation", lhs, rhs, lhs < rhs)


def relaxation_seq_term(alpha_k: float, lam_k: float, alpha_prev: float, lam_prev: float) -> float:
    """Sequence-form feasibility expression at one index (negative is good)."""
    nu_k = 1.0 / lam_k - 1.0
    nu_prev = 1.0 / lam_prev - 1.0
    return (
        alpha_k * (1.0 + alpha_k)
        + nu_k * alpha_k * (1.0 - alpha_k)
        - nu_prev * (1.0 - alpha_prev)
    )


@dataclass(frozen=True)
class RelaxationSeqReport:
    """Per-index values of the sequence feasibility expression.

    ``tail_sup`` approximates the limsup by the supremum over the trailing
    window (reported as tail-satisfied, not proved); ``first_nonstrict_k`` is
    the first index from which the non-strict form holds through the end of
    the evaluated range, or None.
    """

    ks: Sequence[int]
    values: Sequence[float]
    tail_window: int
    tail_sup: float
    tail_satisfied: bool
    first_nonstrict_k: Optional[int]


def check_relaxation_seq(schedule, ks: Iterable[int], tail_fraction: float = 0.25) -> RelaxationSeqReport:
    """Evaluate the sequence feasibility expression over ``ks``.

    ``schedule`` is anything exposing ``alpha_at(k)`` and ``lambda_at(k)``.
    Indices below 2 are skipped (the expression looks one step back).
    """
    ks = sorted(k for k in ks if k >= 2)
    if not ks:
        raise ValueError("need at least one index k >= 2")
    values = [
        relaxation_seq_term(
            schedule.alpha_at(k), schedule.lambda_at(k),
            schedule.alpha_at(k - 1), schedule.lambda_at(k - 1),
        )
        for k in ks
    ]
    window = max(1, int(len(ks) * tail_fraction))
    tail_sup = max(values[-window:])
    first_nonstrict = None
    for i in range(len(ks) - 1, -1, -1):
        if values[i] > 0.0:
            break
        first_nonstrict = ks[i]
    return RelaxationSeqReport(
        ks=ks,
        values=values,
        tail_window=window,
        tail_sup=tail_sup,
        tail_satisfied=tail_sup < 0.0,
        first_nonstrict_k=first_nonstrict,
    )


def check_contraction_condition(alpha: float, lam: float, q: float, xi: float) -> CheckResult:
    """Constant-parameter quasi-contractive condition (non-strict).

    ``Q a (1 + a) + xi nu a (1 - a) - xi Q nu (1 - a) <= 0`` with
    ``Q = contraction_constant(lam, q, xi)`` and ``nu = (1 - lam) / lam``.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    Q = contraction_constant(lam, q, xi)
    nu = 1.0 / lam - 1.0
    lhs = (
        Q * alpha * (1.0 + alpha)
        + xi * nu * alpha * (1.0 - alpha)
        - xi * Q * nu * (1.0 - alpha)
    )
    return CheckResult("contraction", lhs, 0.0, lhs <= 0.0)


def feasibility_poly_coefficients(alpha: float, q: float) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of ``feasibility_poly(lam) = a lam^2 - b lam + c``."""
    a = (1.0 + alpha * alpha) * (1.0 - q * q)
    b = 2.0 * alpha * alpha + (1.0 - alpha) * (2.0 - q * q)
    c = (1.0 - alpha) ** 2
    return a, b, c


def feasibility_poly(lam: float, alpha: float, q: float) -> float:
    """Feasibility polynomial whose sign decides the q-contractive condition.

    ``feasibility_poly(0) = (1 - alpha)^2`` and ``feasibility_poly(1) = -alpha q^2 (1 + alpha)``, so for
    alpha, q in (0, 1) there is exactly one root in (0, 1).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    a, b, c = feasibility_poly_coefficients(alpha, q)
    return (a * lam - b) * lam + c


def lambda_alpha_1(alpha: float) -> float:
    """Largest feasible constant relaxation in the q -> 1 limit.

    Solves the equality case of the constant-parameter bound:
    ``(1 - a)^2 / (a (1 + a) + (1 - a)^2)``.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    num = (1.0 - alpha) ** 2
    return num / (alpha * (1.0 + alpha) + num)


def lambda_alpha_q(alpha: float, q: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Unique root of ``feasibility_poly`` in (0, 1) by bisection.

    For ``alpha = 0`` the root degenerates to the boundary and 1 is returned.
    Bisection runs to absolute tolerance ``tol`` on lambda (200 iterations
    cap; 2^-200 is far below any requested tolerance).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if alpha == 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    f_lo = feasibility_poly(lo, alpha, q)
    f_hi = feasibility_poly(hi, alpha, q)
    if not (f_lo > 0.0 and f_hi < 0.0):  # cannot happen for alpha in (0,1)
        raise ValueError("feasibility_poly does not bracket a root on [0, 1]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if feasibility_poly(mid, alpha, q) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def lambda_bracket(alpha: float, q: float) -> tuple[float, float]:
    """Closed-form enclosure ``[ratio * lambda_{a,1}, lambda_{a,1}]`` of the root."""
    top = lambda_alpha_1(alpha)
    ratio = (2.0 * alpha * alpha + (1.0 - alpha)) / (
        2.0 * alpha * alpha + (1.0 - alpha) * (2.0 - q * q)
    )
    return ratio * top, top


def xi_threshold(alpha: float, lam: float, q: float) -> Optional[float]:
    """Least xi in (0, 1] making ``check_contraction_condition`` pass, or None when impossible.

    The condition is quadratic in xi (the contraction constant itself depends
    on xi) with a concave left-hand side, so the feasible region is
    ``xi >= xi*`` for the larger root ``xi*``; that root exists exactly when
    ``1 - lam + lam q^2 > alpha`` and the product
    ``[a lam (1+a) / ((1-a)(1-lam))] * [(1-lam+lam q^2) / (1-lam+lam q^2-a)]``
    is below one.  At ``alpha = 0`` every xi works and 0 is returned.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if not 0.0 < lam <= 1.0:
        raise ValueError("lambda must lie in (0, 1]")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if alpha == 0.0:
        return 0.0
    if lam == 1.0:
        return None
    Q1 = 1.0 - lam + lam * q * q
    if Q1 - alpha <= 0.0:
        return None
    product = (
        alpha * lam * (1.0 + alpha) / ((1.0 - alpha) * (1.0 - lam))
    ) * (Q1 / (Q1 - alpha))
    if product >= 1.0:
        return None
    nu = 1.0 / lam - 1.0
    Q0 = (1.0 - lam + lam * q) ** 2
    D = lam * (1.0 - lam) * (1.0 - q) ** 2
    # lhs(xi) = -a xi^2 + b xi + c, concave with lhs(0) > 0 > lhs(1).
    a = D * nu * (1.0 - alpha)
    b = D * alpha * (1.0 + alpha) + nu * alpha * (1.0 - alpha) - Q0 * nu * (1.0 - alpha)
    c = Q0 * alpha * (1.0 + alpha)
    if a == 0.0:  # q = 1: the condition is genuinely linear in xi
        return -c / b
    # positive root of a xi^2 - b xi - c = 0 (the roots straddle zero since
    # c > 0); stable two-branch quadratic formula avoids cancellation.
    disc = math.sqrt(b * b + 4.0 * a * c)
    qq = 0.5 * (b + math.copysign(disc, b)) if b != 0.0 else 0.5 * disc
    return max(qq / a, -c / qq)


def rate_bound(k: int, alpha: float, Q_const: float, d1: float) -> float:
    """Worst-case envelope for the squared distance after ``k`` steps.

    ``[(alpha^{k+1} - Q^{k+1}) / (alpha - Q)] * d1``, the closed form of the
    geometric sum ``sum_{j=0..k} alpha^{k-j} Q^j * d1``; ``k = 0`` gives
    ``d1`` itself.  Requires ``Q_const != alpha`` (the equality case is
    incompatible with the feasibility condition).
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if not 0.0 < Q_const < 1.0:
        raise ValueError("Q_const must lie in (0, 1)")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if Q_const == alpha:
        raise ValueError("Q_const = alpha is excluded")
    return (alpha ** (k + 1) - Q_const ** (k + 1)) / (alpha - Q_const) * d1


def rate_bound_sum(k: int, alpha: float, Qs, d1: float) -> float:
    """Geometric-sum form ``[alpha^k + sum_j alpha^{k-j} prod_{i<=j} Q_i] d1``.

    ``Qs`` may be a scalar (constant contraction) or a sequence of per-step
    constants ``Q_1 .. Q_k``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if isinstance(Qs, (int, float)):
        Qs = [float(Qs)] * k
    else:
        Qs = list(Qs)
        if len(Qs) < k:
            raise ValueError(f"need {k} per-step constants, got {len(Qs)}")
    total = alpha ** k
    prod = 1.0
    for j in range(1, k + 1):
        prod *= Qs[j - 1]
        total += alpha ** (k - j) * prod
    return total * d1


@dataclass(frozen=True)
class RateBound:
    """Frozen rate envelope ``bound(k) = rate_bound(k, alpha, Q_const, d1)``."""

    Q_const: float
    alpha: float
    d1: float

    def __post_init__(self):
        if not self.Q_const > self.alpha:
            raise ValueError("Q_const must exceed alpha")

    def bound(self, k: int) -> float:
        return rate_bound(k, self.alpha, self.Q_const, self.d1)


@dataclass(frozen=True)
class NesterovBound:
    """Relaxation bound for the constant-step momentum scheme.

    ``value = 2 Q / (1 - sqrt(Q) + 2 Q)`` for condition number ``Q``;
    ``exceeds_one`` flags values above 1, which fall outside the relaxation
    range assumed elsewhere (reported, never enforced).
    """

    value: float
    exceeds_one: bool


def nesterov_lambda_bound(Q_cond: float) -> NesterovBound:
    if Q_cond < 1.0:
        raise ValueError("condition number must be >= 1")
    value = 2.0 * Q_cond / (1.0 - math.sqrt(Q_cond) + 2.0 * Q_cond)
    return NesterovBound(value=value, exceeds_one=value > 1.0)


def strongly_convex_gradient_factor(mu: float, L: float, rho: float) -> float:
    """Factor ``1 - 2 mu L rho / (L + mu)`` for gradient steps on a
    mu-strongly convex, L-smooth objective with ``rho <= 2 / (L + mu)``.

    At ``rho = 2 / (mu + L)`` this equals ``((L - mu) / (L + mu))^2``, the
    square of the spectral factor ``max |1 - rho eig|`` at the same step; it
    is exposed for comparison against the spectrally certified ``q_factor``.
    """
    if not 0.0 < mu <= L:
        raise ValueError("need 0 < mu <= L")
    if not 0.0 < rho <= 2.0 / (L + mu):
        raise ValueError("rho must lie in (0, 2/(L+mu)]")
    return 1.0 - 2.0 * mu * L * rho / (L + mu)


def lambda_grid_points(alpha_steps: int, q_steps: int):
    """Grid nodes: alpha in {0, 1/n, ...}, q strictly inside (0, 1)."""
    if alpha_steps < 2 or q_steps < 2:
        raise ValueError("step counts must be >= 2")
    alphas = [i / alpha_steps for i in range(alpha_steps)]
    qs = [(j + 1) / (q_steps + 1) for j in range(q_steps)]
    return alphas, qs


def lambda_grid(alpha_steps: int, q_steps: int, check_bracket: bool = True):
    """Yield ``(alpha, q, lambda_alpha_q)`` over the default grid.

    With ``check_bracket`` each cell is asserted against the closed-form
    enclosure before being yielded.
    """
    alphas, qs = lambda_grid_points(alpha_steps, q_steps)
    for alpha in alphas:
        for q in qs:
            lam = lambda_alpha_q(alpha, q)
            if check_bracket:
                lo, hi = lambda_bracket(alpha, q)
                if not lo - 1e-10 <= lam <= hi + 1e-10:
                    raise AssertionError(
                        f"bracketing violated at alpha={alpha}, q={q}: "
                        f"{lo} <= {lam} <= {hi}"
                    )
            yield alpha, q, lam
