"""Proximal building blocks and composite splitting operators.

Each splitting scheme is packaged as an :class:`OperatorHandle`: an evaluable
self-map together with whatever contraction metadata can be certified for it
(averagedness ``gamma``, quasi-contraction factor ``q_factor``, cocoercivity
``beta`` of an embedded forward term) and a map from fixed points back to
problem solutions.  Handles are immutable and their ``apply`` is pure, so
concurrent evaluation on distinct inputs is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .linalg import BlockVector, LinearMap, Point, norm, operator_norm_estimate, spd_solver

__all__ = [
    "OperatorHandle",
    "ProxFunction",
    "box",
    "davis_yin_op",
    "douglas_rachford_op",
    "evaluate",
    "forward_backward_op",
    "gradient_step_op",
    "l1",
    "l2_ball",
    "primal_dual_op",
    "prox",
    "prox_conjugate",
    "quadratic",
    "residual",
    "split_dr_op",
    "zero",
]


# --------------------------------------------------------------------------
# prox-friendly functions


@dataclass(frozen=True)
class ProxFunction:
    """Convex function with a closed-form (or one-solve) proximal map.

    ``kind`` is one of ``l1``, ``box``, ``quadratic``, ``l2_ball``, ``zero``;
    the remaining fields are per-kind parameters.
    """

    kind: str
    weight: float = 0.0
    lo: np.ndarray | float = 0.0
    hi: np.ndarray | float = 0.0
    A: Optional[LinearMap] = None
    b: Optional[np.ndarray] = None
    radius: float = 0.0


def l1(weight: float) -> ProxFunction:
    """``weight * ||x||_1``."""
    if weight < 0:
        raise ValueError("l1 weight must be >= 0")
    return ProxFunction("l1", weight=float(weight))


def box(lo, hi) -> ProxFunction:
    """Indicator of the box [lo, hi] (infinite bounds allowed as markers)."""
    lo_a, hi_a = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(lo_a > hi_a):
        raise ValueError("box requires lo <= hi")
    return ProxFunction("box", lo=lo_a, hi=hi_a)


def quadratic(A: LinearMap, b: np.ndarray) -> ProxFunction:
    """``0.5 x^T A x - b^T x`` with A symmetric positive semidefinite."""
    return ProxFunction("quadratic", A=A, b=np.asarray(b, dtype=float))


def l2_ball(radius: float) -> ProxFunction:
    """Indicator of the origin-centered Euclidean ball of given radius."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    return ProxFunction("l2_ball", radius=float(radius))


def zero() -> ProxFunction:
    """The identically-zero function (prox = identity)."""
    return ProxFunction("zero")


def evaluate(f: ProxFunction, x: np.ndarray) -> float:
    """Function value at ``x`` (indicators return 0 or +inf)."""
    if f.kind == "zero":
        return 0.0
    if f.kind == "l1":
        return f.weight * float(np.sum(np.abs(x)))
    if f.kind == "box":
        return 0.0 if bool(np.all(x >= f.lo) and np.all(x <= f.hi)) else math.inf
    if f.kind == "l2_ball":
        return 0.0 if norm(x) <= f.radius * (1.0 + 1e-12) else math.inf
    if f.kind == "quadratic":
        return 0.5 * float(x @ f.A.matrix @ x) - float(f.b @ x)
    raise ValueError(f"unknown kind {f.kind!r}")


def make_prox(f: ProxFunction, rho: float) -> Callable[[np.ndarray], np.ndarray]:
    """Specialized closure for ``v -> prox_{rho f}(v)``.

    The quadratic kind factors ``I + rho A`` once (diagonal A is solved
    directly), which is what makes long resolvent iterations cheap.
    """
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if f.kind == "zero":
        return lambda v: v
    if f.kind == "l1":
        t = rho * f.weight
        return lambda v: np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    if f.kind == "box":
        lo, hi = f.lo, f.hi
        return lambda v: np.clip(v, lo, hi)
    if f.kind == "l2_ball":
        r = f.radius

        def project(v: np.ndarray) -> np.ndarray:
            nv = norm(v)
            return v if nv <= r else v * (r / nv)

        return project
    if f.kind == "quadratic":
        A, b = f.A.matrix, f.b
        n = A.shape[0]
        diag = np.diagonal(A)
        if np.count_nonzero(A - np.diag(diag)) == 0:
            scale = 1.0 + rho * diag
            return lambda v: (v + rho * b) / scale
        solve = spd_solver(LinearMap(np.eye(n) + rho * A))
        return lambda v: solve(v + rho * b)
    raise ValueError(f"unknown kind {f.kind!r}")


def prox(f: ProxFunction, rho: float, v: np.ndarray) -> np.ndarray:
    """Proximal map: the minimizer of ``f(u) + ||u - v||^2 / (2 rho)``."""
    return make_prox(f, rho)(v)


def prox_conjugate(f: ProxFunction, sigma: float, w: np.ndarray) -> np.ndarray:
    """Prox of ``sigma * f^*`` via Moreau: ``w - sigma * prox_{f/sigma}(w/sigma)``."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return w - sigma * prox(f, 1.0 / sigma, w / sigma)


# --------------------------------------------------------------------------
# operator handles


@dataclass(frozen=True)
class OperatorHandle:
    """Evaluable self-map with certified metadata.

    ``gamma`` is the averagedness constant (T = (1-gamma) I + gamma R with R
    nonexpansive), ``q_factor`` a certified factor with ``||Tx - p|| <=
    q ||x - p||`` against the fixed point, ``beta`` the cocoercivity constant
    of an embedded forward term.  ``extract_solution`` maps a fixed point of
    ``apply`` to a solution of the underlying problem.
    """

    apply: Callable[[Point], Point]
    gamma: Optional[float] = None
    q_factor: Optional[float] = None
    beta: Optional[float] = None
    extract_solution: Optional[Callable[[Point], np.ndarray]] = None
    name: str = ""
    notes: Tuple[str, ...] = field(default_factory=tuple)


def residual(T: OperatorHandle, y: Point) -> float:
    """Fixed-point residual ``||y - T y||``."""
    return norm(y - T.apply(y))


def _spectrum_bounds(A: LinearMap) -> Tuple[float, float]:
    M = A.matrix
    if M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * (1.0 + np.abs(M).max())):
        raise ValueError("expected a symmetric matrix")
    eigs = np.linalg.eigvalsh(M)
    return float(eigs[0]), float(eigs[-1])


def gradient_step_op(A_spd: LinearMap, b: np.ndarray, rho: float) -> OperatorHandle:
    """Explicit gradient step ``x -> x - rho (A x - b)`` on a quadratic.

    Averagedness is ``rho * L / 2`` (cocoercivity ``beta = 1/L``); the
    quasi-contraction factor is the spectral value ``max |1 - rho * eig|``,
    attached only when it is strictly below one.
    """
    mu, L = _spectrum_bounds(A_spd)
    if L <= 0:
        raise ValueError("A must have a positive largest eigenvalue")
    if not 0.0 < rho < 2.0 / L:
        raise ValueError(f"rho must lie in (0, {2.0 / L:.6g})")
    q = max(abs(1.0 - rho * mu), abs(1.0 - rho * L))
    M, bb = A_spd.matrix, np.asarray(b, dtype=float)

    def apply(x: np.ndarray) -> np.ndarray:
        return x - rho * (M @ x - bb)

    return OperatorHandle(
        apply=apply,
        gamma=rho * L / 2.0,
        q_factor=q if q < 1.0 else None,
        beta=1.0 / L,
        extract_solution=lambda x: x,
        name="gradient",
    )


def proximal_op(f: ProxFunction, rho: float) -> OperatorHandle:
    """Resolvent iteration map ``x -> prox_{rho f}(x)`` (1/2-averaged)."""
    p = make_prox(f, rho)
    q = None
    if f.kind == "quadratic":
        mu, L = _spectrum_bounds(f.A)
        if mu > 0:
            q = 1.0 / (1.0 + rho * mu)
    return OperatorHandle(
        apply=p,
        gamma=0.5,
        q_factor=q,
        extract_solution=lambda x: x,
        name="proximal",
    )


def forward_backward_op(
    f_nonsmooth: ProxFunction, A_spd: LinearMap, b: np.ndarray, rho: float
) -> OperatorHandle:
    """Forward-backward map ``x -> prox_{rho f}(x - rho (A x - b))``.

    With ``L`` the largest eigenvalue of ``A`` the forward term is
    ``1/L``-cocoercive and the composition is ``2/(4 - rho L)``-averaged; a
    vanishing forward term (A = 0, b = 0) degenerates to the plain resolvent,
    which is 1/2-averaged.
    """
    mu, L = _spectrum_bounds(A_spd)
    bb = np.asarray(b, dtype=float)
    if L > 0:
        beta = 1.0 / L
        if not 0.0 < rho < 2.0 * beta:
            raise ValueError(f"rho must lie in (0, {2.0 * beta:.6g})")
        gamma = 2.0 / (4.0 - rho * L)
    else:
        if rho <= 0:
            raise ValueError("rho must be > 0")
        beta = None
        gamma = 0.5 if norm(bb) == 0.0 else None
    p = make_prox(f_nonsmooth, rho)
    M = A_spd.matrix

    def apply(x: np.ndarray) -> np.ndarray:
        return p(x - rho * (M @ x - bb))

    return OperatorHandle(
        apply=apply,
        gamma=gamma,
        beta=beta,
        extract_solution=lambda x: x,
        name="forward-backward",
    )


def douglas_rachford_op(fA: ProxFunction, fB: ProxFunction, r: float) -> OperatorHandle:
    """Douglas-Rachford map ``z -> z + J_{rA}(2 J_{rB} z - z) - J_{rB} z``.

    1/2-averaged; a fixed point ``z`` yields the solution ``J_{rB} z``.
    """
    if r <= 0:
        raise ValueError("r must be > 0")
    pa, pb = make_prox(fA, r), make_prox(fB, r)

    def apply(z: np.ndarray) -> np.ndarray:
        xb = pb(z)
        xa = pa(2.0 * xb - z)
        return z + (xa - xb)

    return OperatorHandle(
        apply=apply,
        gamma=0.5,
        extract_solution=pb,
        name="douglas-rachford",
    )


def primal_dual_op(
    f: ProxFunction, g: ProxFunction, L: LinearMap, tau: float, sigma: float
) -> OperatorHandle:
    """One sweep of primal-dual splitting for ``min f(x) + g(L x)``.

    Updates ``x+ = prox_{tau f}(x - tau L^T y)`` then ``y+ =
    prox_{sigma g*}(y + sigma L (2 x+ - x))``; requires
    ``tau * sigma * ||L||^2 <= 1``.  The map is 1/2-averaged on the product
    space and the primal block of a fixed point solves the problem.
    """
    if tau <= 0 or sigma <= 0:
        raise ValueError("tau and sigma must be > 0")
    est = operator_norm_estimate(L)
    if tau * sigma * est * est > 1.0 + 1e-12:
        raise ValueError(f"step bound violated: tau*sigma*||L||^2 = {tau * sigma * est * est:.6g} > 1")
    pf = make_prox(f, tau)
    pg = make_prox(g, 1.0 / sigma)

    def apply(p: BlockVector) -> BlockVector:
        x, y = p.primal, p.dual
        xp = pf(x - tau * L.apply_adjoint(y))
        w = y + sigma * L.apply(2.0 * xp - x)
        yp = w - sigma * pg(w / sigma)
        return BlockVector(xp, yp)

    return OperatorHandle(
        apply=apply,
        gamma=0.5,
        extract_solution=lambda p: p.primal,
        name="primal-dual",
        notes=("averagedness 1/2 holds in the step-induced product metric",),
    )


def split_dr_op(
    f: ProxFunction, g: ProxFunction, L: LinearMap, tau: float, sigma: float
) -> OperatorHandle:
    """Split Douglas-Rachford sweep with scalar preconditioners.

    Per iteration::

        v  = sigma * (I - prox_{g/sigma}) (L x + y / sigma)
        x+ = prox_{tau f}(x - tau L^T v)
        y+ = sigma * L (x+ - x) + v

    Averagedness 1/2 is assumed in the preconditioned metric (flagged in
    ``notes``); requires ``tau * sigma * ||L||^2 <= 1``.
    """
    if tau <= 0 or sigma <= 0:
        raise ValueError("tau and sigma must be > 0")
    est = operator_norm_estimate(L)
    if tau * sigma * est * est > 1.0 + 1e-12:
        raise ValueError(f"step bound violated: tau*sigma*||L||^2 = {tau * sigma * est * est:.6g} > 1")
    pf = make_prox(f, tau)
    pg = make_prox(g, 1.0 / sigma)

    def apply(p: BlockVector) -> BlockVector:
        x, y = p.primal, p.dual
        w = L.apply(x) + y / sigma
        v = sigma * (w - pg(w))
        xp = pf(x - tau * L.apply_adjoint(v))
        yp = sigma * L.apply(xp - x) + v
        return BlockVector(xp, yp)

    return OperatorHandle(
        apply=apply,
        gamma=0.5,
        extract_solution=lambda p: p.primal,
        name="split-douglas-rachford",
        notes=("averagedness 1/2 assumed in the scalar-preconditioned metric",),
    )


def davis_yin_op(
    fB: ProxFunction, fA: ProxFunction, A_spd: LinearMap, b: np.ndarray, rho: float
) -> OperatorHandle:
    """Three-operator splitting map for two prox terms plus a smooth quadratic.

    ``T z = z + J_{rho A}(2 J_{rho B} z - z - rho C(J_{rho B} z)) - J_{rho B} z``
    with ``C x = A_spd x - b``; averagedness ``2 beta / (4 beta - rho)`` where
    ``beta = 1 / L(A_spd)``.  Collapses to forward-backward when ``fB = 0``
    and to Douglas-Rachford when the smooth term vanishes.
    """
    mu, L_sm = _spectrum_bounds(A_spd)
    if L_sm > 0:
        beta = 1.0 / L_sm
        if not 0.0 < rho < 2.0 * beta:
            raise ValueError(f"rho must lie in (0, {2.0 * beta:.6g})")
    else:
        if rho <= 0:
            raise ValueError("rho must be > 0")
        beta = None
    pb_ = make_prox(fB, rho)
    pa_ = make_prox(fA, rho)
    M, bb = A_spd.matrix, np.asarray(b, dtype=float)

    def apply(z: np.ndarray) -> np.ndarray:
        xb = pb_(z)
        xa = pa_(2.0 * xb - z - rho * (M @ xb - bb))
        return z + (xa - xb)

    return OperatorHandle(
        apply=apply,
        gamma=2.0 / (4.0 - rho * L_sm),
        beta=beta,
        extract_solution=pb_,
        name="davis-yin",
    )
