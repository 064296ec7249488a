"""Deterministic desk-scale benchmark instances with reference solutions.

Every generator is a pure function of its parameters and seed (randomness
comes from the SplitMix64 stream documented in :mod:`ikm.rng`), so instances
are bit-reproducible.  References are produced by high-accuracy non-inertial
self-runs; the fixed-point residual of the stored reference is the
independent certificate of its quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .engine import picard
from .linalg import BlockVector, LinearMap, Point, norm, operator_norm_estimate, solve_spd
from .operators import (
    OperatorHandle,
    box,
    davis_yin_op,
    douglas_rachford_op,
    forward_backward_op,
    gradient_step_op,
    l1,
    l2_ball,
    prox,
    primal_dual_op,
    proximal_op,
    quadratic,
    split_dr_op,
)
from .rng import SplitMix64

__all__ = [
    "BenchmarkInstance",
    "SpectralData",
    "make_feasibility",
    "make_lasso",
    "make_quadratic",
    "make_three_term",
    "make_tv1d",
]

REFERENCE_TOL = 1e-12
REFERENCE_CAP = 1_000_000


@dataclass(frozen=True)
class SpectralData:
    """Smoothness/strong-convexity constants and coupling-operator norm."""

    mu: float
    L_smooth: float
    norm_L: Optional[float] = None


@dataclass
class BenchmarkInstance:
    """One benchmark problem with scheme builders and reference data.

    ``builders`` maps a scheme name to a closure over step parameters;
    ``starts`` holds the iteration-space initial point per scheme, and
    ``fixed_points`` a reference fixed point per scheme where one is valid
    for every admissible step choice (it is recomputed on demand otherwise).
    """

    name: str
    kind: str
    params: Dict[str, float]
    initial_point: np.ndarray
    reference_solution: Optional[np.ndarray]
    objective: Optional[Callable[[np.ndarray], float]]
    spectral: Optional[SpectralData]
    default_steps: Dict[str, Dict[str, float]]
    builders: Dict[str, Callable[..., OperatorHandle]] = field(repr=False)
    starts: Dict[str, Point] = field(repr=False)
    fixed_points: Dict[str, Optional[Point]] = field(repr=False)
    step_bound_fixed: Dict[str, bool] = field(repr=False, default_factory=dict)

    @property
    def schemes(self) -> Tuple[str, ...]:
        return tuple(self.builders)

    def resolve_steps(self, scheme: str, **steps) -> Dict[str, float]:
        if scheme not in self.builders:
            raise ValueError(f"{self.name} does not support scheme {scheme!r}")
        resolved = dict(self.default_steps[scheme])
        for key, val in steps.items():
            if val is not None:
                if key not in resolved:
                    raise ValueError(f"scheme {scheme!r} takes no parameter {key!r}")
                resolved[key] = float(val)
        return resolved

    def operator(self, scheme: str, **steps) -> OperatorHandle:
        resolved = self.resolve_steps(scheme, **steps)
        return self.builders[scheme](**resolved)

    def start_point(self, scheme: str) -> Point:
        if scheme not in self.starts:
            raise ValueError(f"{self.name} does not support scheme {scheme!r}")
        return self.starts[scheme]

    def fixed_point(self, scheme: str, **steps) -> Optional[Point]:
        """Reference fixed point for the scheme at the given steps.

        Stored references are reused when they stay valid for any step
        choice (gradient/proximal/fb/pd/sdr/dr map fixed points do not move
        with the step); Davis-Yin fixed points depend on rho, so a fresh
        high-accuracy run is made when rho differs from the default.
        """
        if scheme not in self.builders:
            raise ValueError(f"{self.name} does not support scheme {scheme!r}")
        stored = self.fixed_points.get(scheme)
        if stored is not None and self.step_bound_fixed.get(scheme, False):
            resolved = self.resolve_steps(scheme, **steps)
            if resolved != self.default_steps[scheme]:
                res = picard(self.operator(scheme, **steps), self.start_point(scheme),
                             REFERENCE_TOL, REFERENCE_CAP)
                return res.xs[0] if res.status == "converged" else None
        return stored


# --------------------------------------------------------------------------
# shared random pieces


def _normal_vec(gen: SplitMix64, n: int) -> np.ndarray:
    return np.array([gen.normal() for _ in range(n)])


def _orthogonal(gen: SplitMix64, n: int) -> np.ndarray:
    M = np.array([[gen.normal() for _ in range(n)] for _ in range(n)])
    Q, R = np.linalg.qr(M)
    return Q * np.sign(np.diagonal(R))


def _sensing_data(m: int, n: int, sparsity: float, seed: int):
    """Design matrix, planted sparse truth and noisy observations."""
    gen = SplitMix64(seed)
    A = np.array([[gen.normal() for _ in range(n)] for _ in range(m)]) / math.sqrt(m)
    k_nz = max(1, round(sparsity * n))
    idx = list(range(n))
    gen.shuffle(idx)
    truth = np.zeros(n)
    for i in idx[:k_nz]:
        truth[i] = gen.normal()
    clean = A @ truth
    level = 0.01 * (clean.max() - clean.min())  # 1% of signal range
    b = clean + level * _normal_vec(gen, m)
    return A, b, truth


# --------------------------------------------------------------------------
# generators


def make_quadratic(dim: int, mu: float, L_smooth: float, seed: int) -> BenchmarkInstance:
    """Strongly convex quadratic ``0.5 x^T A x - b^T x`` with known spectrum.

    Eigenvalues are drawn uniformly in [mu, L] with both extremes always
    present, then conjugated by a random orthogonal matrix.  The reference is
    the direct solve of ``A x = b``.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if not 0.0 < mu <= L_smooth:
        raise ValueError("need 0 < mu <= L_smooth")
    gen = SplitMix64(seed)
    eigs = [mu, L_smooth] + [gen.uniform_in(mu, L_smooth) for _ in range(dim - 2)]
    Q = _orthogonal(gen, dim)
    A = Q @ np.diag(eigs) @ Q.T
    A = 0.5 * (A + A.T)
    b = _normal_vec(gen, dim)
    x0 = _normal_vec(gen, dim)
    A_map = LinearMap(A)
    ref = solve_spd(A_map, b)

    def objective(x: np.ndarray) -> float:
        return 0.5 * float(x @ A @ x) - float(b @ x)

    rho_grad = 2.0 / (mu + L_smooth)
    f_quad = quadratic(A_map, b)
    builders = {
        "gradient": lambda rho: gradient_step_op(A_map, b, rho),
        "proximal": lambda rho: proximal_op(f_quad, rho),
    }
    return BenchmarkInstance(
        name=f"quadratic(dim={dim},mu={mu:g},L={L_smooth:g},seed={seed})",
        kind="quadratic",
        params={"dim": dim, "mu": mu, "L_smooth": L_smooth, "seed": seed},
        initial_point=x0,
        reference_solution=ref,
        objective=objective,
        spectral=SpectralData(mu=mu, L_smooth=L_smooth),
        default_steps={"gradient": {"rho": rho_grad}, "proximal": {"rho": 1.0}},
        builders=builders,
        starts={"gradient": x0, "proximal": x0},
        fixed_points={"gradient": ref, "proximal": ref},
    )


def make_lasso(m: int, n: int, sparsity: float, mu_reg: float, seed: int) -> BenchmarkInstance:
    """LASSO instance ``0.5 ||A x - b||^2 + mu ||x||_1``.

    The reference is a non-inertial forward-backward run at ``rho = 1/L`` to
    residual 1e-12 (cap 1e6 iterations); its fixed-point residual certifies
    optimality for any admissible step size.
    """
    if m < 2 or n < 2:
        raise ValueError("m and n must be >= 2")
    if not 0.0 < sparsity < 1.0:
        raise ValueError("sparsity must lie in (0, 1)")
    if mu_reg <= 0.0:
        raise ValueError("mu_reg must be > 0")
    A, b, _ = _sensing_data(m, n, sparsity, seed)
    gram = A.T @ A
    gram = 0.5 * (gram + gram.T)
    atb = A.T @ b
    eigs = np.linalg.eigvalsh(gram)
    mu_s, L_s = max(float(eigs[0]), 0.0), float(eigs[-1])
    gram_map = LinearMap(gram)
    x0 = np.zeros(n)

    def build_fb(rho: float) -> OperatorHandle:
        return forward_backward_op(l1(mu_reg), gram_map, atb, rho)

    rho_default = 1.0 / L_s
    ref_run = picard(build_fb(rho_default), x0, REFERENCE_TOL, REFERENCE_CAP)
    if ref_run.status != "converged":
        raise RuntimeError(f"lasso reference run did not reach {REFERENCE_TOL:g}")
    ref = ref_run.xs[0]

    def objective(x: np.ndarray) -> float:
        r = A @ x - b
        return 0.5 * float(r @ r) + mu_reg * float(np.sum(np.abs(x)))

    return BenchmarkInstance(
        name=f"lasso(m={m},n={n},sparsity={sparsity:g},mu={mu_reg:g},seed={seed})",
        kind="lasso",
        params={"m": m, "n": n, "sparsity": sparsity, "mu_reg": mu_reg, "seed": seed},
        initial_point=x0,
        reference_solution=ref,
        objective=objective,
        spectral=SpectralData(mu=mu_s, L_smooth=L_s),
        default_steps={"fb": {"rho": rho_default}},
        builders={"fb": build_fb},
        starts={"fb": x0},
        fixed_points={"fb": ref},
    )


def make_tv1d(n: int, mu_reg: float, seed: int) -> BenchmarkInstance:
    """1-D total-variation denoising ``0.5 ||x - b||^2 + mu ||D x||_1``.

    ``D`` is the (n-1) x n forward-difference map (norm below 2).  Both the
    primal-dual and the split Douglas-Rachford builders target the same
    saddle point, so the stored reference fixed point is valid for either
    scheme at any admissible step sizes.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    if mu_reg < 0.0:
        raise ValueError("mu_reg must be >= 0")
    gen = SplitMix64(seed)
    n_seg = 5
    levels = [gen.uniform_in(-1.0, 1.0) for _ in range(n_seg)]
    signal = np.empty(n)
    seg = n // n_seg
    for i in range(n_seg):
        end = n if i == n_seg - 1 else (i + 1) * seg
        signal[i * seg:end] = levels[i]
    level = 0.01 * (signal.max() - signal.min())
    b = signal + level * _normal_vec(gen, n)

    D = np.zeros((n - 1, n))
    for i in range(n - 1):
        D[i, i], D[i, i + 1] = -1.0, 1.0
    D_map = LinearMap(D)
    norm_L = operator_norm_estimate(D_map)

    f = quadratic(LinearMap(np.eye(n)), b)
    g = l1(mu_reg)
    tau = sigma = 0.99 / norm_L

    builders = {
        "pd": lambda tau, sigma: primal_dual_op(f, g, D_map, tau, sigma),
        "sdr": lambda tau, sigma: split_dr_op(f, g, D_map, tau, sigma),
    }
    start = BlockVector(np.zeros(n), np.zeros(n - 1))
    defaults = {"pd": {"tau": tau, "sigma": sigma}, "sdr": {"tau": tau, "sigma": sigma}}

    if mu_reg == 0.0:
        saddle: Optional[BlockVector] = BlockVector(b.copy(), np.zeros(n - 1))
    else:
        ref_run = picard(builders["pd"](**defaults["pd"]), start, REFERENCE_TOL, REFERENCE_CAP)
        if ref_run.status != "converged":
            raise RuntimeError(f"tv1d reference run did not reach {REFERENCE_TOL:g}")
        saddle = ref_run.xs[0]

    def objective(x: np.ndarray) -> float:
        r = x - b
        return 0.5 * float(r @ r) + mu_reg * float(np.sum(np.abs(D @ x)))

    return BenchmarkInstance(
        name=f"tv1d(n={n},mu={mu_reg:g},seed={seed})",
        kind="tv1d",
        params={"n": n, "mu_reg": mu_reg, "seed": seed},
        initial_point=np.zeros(n),
        reference_solution=saddle.primal if saddle is not None else None,
        objective=objective,
        spectral=SpectralData(mu=1.0, L_smooth=1.0, norm_L=norm_L),
        default_steps=defaults,
        builders=builders,
        starts={"pd": start, "sdr": start},
        fixed_points={"pd": saddle, "sdr": saddle},
    )


def make_three_term(m: int, n: int, mu_reg: float, box_lo: float, box_hi: float,
                    seed: int, sparsity: float = 0.1) -> BenchmarkInstance:
    """Box-constrained LASSO split into three terms for Davis-Yin.

    Data generation consumes the same random stream as :func:`make_lasso`,
    so equal (m, n, sparsity, seed) yield the identical design and
    observations.  The Davis-Yin fixed point depends on rho; the stored one
    is for the default ``rho = 1/L`` and other choices trigger a fresh
    reference run.
    """
    if box_lo >= box_hi:
        raise ValueError("need box_lo < box_hi")
    A, b, _ = _sensing_data(m, n, sparsity, seed)
    gram = A.T @ A
    gram = 0.5 * (gram + gram.T)
    atb = A.T @ b
    eigs = np.linalg.eigvalsh(gram)
    mu_s, L_s = max(float(eigs[0]), 0.0), float(eigs[-1])
    gram_map = LinearMap(gram)
    fB = l1(mu_reg)
    fA = box(box_lo, box_hi)
    lo_arr, hi_arr = np.asarray(box_lo, dtype=float), np.asarray(box_hi, dtype=float)

    def build_dy(rho: float) -> OperatorHandle:
        return davis_yin_op(fB, fA, gram_map, atb, rho)

    rho_default = 1.0 / L_s
    z0 = np.zeros(n)
    ref_run = picard(build_dy(rho_default), z0, REFERENCE_TOL, REFERENCE_CAP)
    if ref_run.status != "converged":
        raise RuntimeError(f"three_term reference run did not reach {REFERENCE_TOL:g}")
    z_star = ref_run.xs[0]
    ref = prox(fB, rho_default, z_star)

    def objective(x: np.ndarray) -> float:
        # evaluated on the box projection so near-feasible iterates report
        # a finite value
        xp = np.clip(x, lo_arr, hi_arr)
        r = A @ xp - b
        return 0.5 * float(r @ r) + mu_reg * float(np.sum(np.abs(xp)))

    return BenchmarkInstance(
        name=f"three_term(m={m},n={n},mu={mu_reg:g},box=[{box_lo:g},{box_hi:g}],seed={seed})",
        kind="three_term",
        params={"m": m, "n": n, "mu_reg": mu_reg, "box_lo": box_lo,
                "box_hi": box_hi, "seed": seed, "sparsity": sparsity},
        initial_point=z0,
        reference_solution=ref,
        objective=objective,
        spectral=SpectralData(mu=mu_s, L_smooth=L_s),
        default_steps={"dy": {"rho": rho_default}},
        builders={"dy": build_dy},
        starts={"dy": z0},
        fixed_points={"dy": z_star},
        step_bound_fixed={"dy": True},
    )


def make_feasibility(dim: int, seed: int) -> BenchmarkInstance:
    """Two-set feasibility: an origin-centered ball against a shifted box.

    The sets are built so the origin lies well inside the intersection; it
    is therefore an exact fixed point of the Douglas-Rachford map for every
    step size and serves as the reference.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    gen = SplitMix64(seed)
    c = _normal_vec(gen, dim)
    c *= 0.5 / max(norm(c), 1e-12)  # ||c||_inf <= 0.5, so 0 stays inside the box
    fB = l2_ball(0.8)
    fA = box(c - 1.0, c + 1.0)

    def build_dr(r: float) -> OperatorHandle:
        return douglas_rachford_op(fA, fB, r)

    z0 = 3.0 * _normal_vec(gen, dim)
    ref = np.zeros(dim)
    return BenchmarkInstance(
        name=f"feasibility(dim={dim},seed={seed})",
        kind="feasibility",
        params={"dim": dim, "seed": seed},
        initial_point=z0,
        reference_solution=ref,
        objective=None,
        spectral=None,
        default_steps={"dr": {"r": 1.0}},
        builders={"dr": build_dr},
        starts={"dr": z0},
        fixed_points={"dr": ref},
    )
