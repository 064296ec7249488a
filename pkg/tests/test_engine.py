import numpy as np
import pytest

from ikm import problems
from ikm.engine import (
    DivergenceError,
    IterateState,
    RunResult,
    Schedule,
    StoppingRule,
    km_step,
    picard,
    run,
    small_o_check,
    verify_Ck_monotone,
    verify_contraction,
    verify_descent,
    verify_product_bound,
)
from ikm.linalg import dot, norm
from ikm.operators import OperatorHandle, douglas_rachford_op, zero
from ikm.rng import SplitMix64

IDENTITY = douglas_rachford_op(zero(), zero(), 1.0)  # exact identity map


def rand_vec(gen, n):
    return np.array([gen.normal() for _ in range(n)])


# --------------------------------------------------------------------------
# schedules


def test_schedule_constant_validation():
    with pytest.raises(ValueError):
        Schedule.constant(1.0, 0.5)
    with pytest.raises(ValueError):
        Schedule.constant(0.5, 0.0)
    s = Schedule.constant(0.2, 1.5)  # over-relaxation stays expressible
    assert s.alpha_at(10) == 0.2
    assert s.lambda_at(10) == 1.5


def test_schedule_ramp():
    s = Schedule.ramp(0.0, 0.3, 4, 0.5)
    vals = [s.alpha_at(k) for k in range(1, 7)]
    assert vals == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.3, 0.3])
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_schedule_table_holds_last_and_validates():
    s = Schedule.table([0.1, 0.2], [0.9, 0.8, 0.7])
    assert s.alpha_at(5) == 0.2
    assert s.lambda_at(5) == 0.7
    with pytest.raises(ValueError):
        Schedule.table([0.2, 0.1], [1.0])  # decreasing alpha
    with pytest.raises(ValueError):
        Schedule.table([0.1], [0.0])


def test_stopping_rule_validation():
    with pytest.raises(ValueError):
        StoppingRule(max_iters=0)
    with pytest.raises(ValueError):
        StoppingRule(max_iters=10, residual_tol=-1.0)


# --------------------------------------------------------------------------
# km_step


def test_km_step_bit_identical_to_apply_when_unrelaxed(quad_50):
    T = quad_50.operator("gradient")
    gen = SplitMix64(1)
    x = rand_vec(gen, 50)
    state = IterateState.initial(x)
    out = km_step(state, T, 0.0, 1.0)
    np.testing.assert_array_equal(out.x_curr, T.apply(x))
    assert out.k == 2
    np.testing.assert_array_equal(out.y_curr, x)


def test_km_step_identity_operator_is_stationary():
    gen = SplitMix64(2)
    x = rand_vec(gen, 7)
    out = km_step(IterateState.initial(x), IDENTITY, 0.0, 0.5)
    np.testing.assert_allclose(out.x_curr, x, atol=1e-15)


def test_km_step_fixed_point_absorption(quad_50):
    T = quad_50.operator("gradient")
    p = quad_50.reference_solution
    state = IterateState(k=5, x_prev=p, x_curr=p)
    out = km_step(state, T, 0.3, 0.8)
    assert norm(out.x_curr - p) <= 1e-12


def test_km_step_parameter_validation():
    x = np.zeros(3)
    with pytest.raises(ValueError):
        km_step(IterateState.initial(x), IDENTITY, 1.0, 0.5)
    with pytest.raises(ValueError):
        km_step(IterateState.initial(x), IDENTITY, 0.0, 0.0)


# --------------------------------------------------------------------------
# run


def test_run_identity_terminates_immediately():
    gen = SplitMix64(3)
    x = rand_vec(gen, 6)
    res = run(IDENTITY, x, Schedule.constant(0.0, 0.5), StoppingRule(100, 0.0))
    assert res.status == "converged"
    assert res.iterations == 1
    assert res.rows[0].residual == 0.0


def test_run_picard_contracts_by_spectral_factor(quad_50):
    inst = quad_50
    T = inst.operator("gradient")
    q = T.q_factor
    res = run(T, inst.start_point("gradient"), Schedule.constant(0.0, 1.0),
              StoppingRule(200, 1e-13), p_ref=inst.reference_solution)
    dists = [r.dist_to_ref for r in res.rows]
    for a, b in zip(dists, dists[1:]):
        assert b <= q * a * (1.0 + 1e-9) + 1e-12


def test_run_supports_per_iteration_family(quad_50):
    inst = quad_50
    T1 = inst.operator("gradient", rho=2.0 / 11.0)
    T2 = inst.operator("gradient", rho=1.0 / 11.0)
    fam = lambda k: T1 if k % 2 else T2  # noqa: E731
    res = run(fam, inst.start_point("gradient"), Schedule.constant(0.0, 1.0),
              StoppingRule(2000, 1e-11), p_ref=inst.reference_solution)
    assert res.status == "converged"
    assert res.operator is None


def test_run_rejects_decreasing_alpha():
    alphas = {1: 0.3, 2: 0.2}
    sched = Schedule(lambda k: alphas.get(k, 0.2), lambda k: 0.5, "custom")
    halve = OperatorHandle(apply=lambda x: 0.5 * x, name="halve")
    with pytest.raises(ValueError, match="decreases"):
        run(halve, np.ones(3), sched, StoppingRule(10, 0.0))


def test_run_divergence_carries_partial_trace():
    # x <- 3x diverges geometrically
    blow = OperatorHandle(apply=lambda x: 3.0 * x, name="blow")
    with pytest.raises(DivergenceError) as exc:
        run(blow, np.ones(4), Schedule.constant(0.0, 1.0), StoppingRule(10_000, 0.0))
    err = exc.value
    assert err.k > 10
    assert isinstance(err.partial, RunResult)
    assert err.partial.status == "diverged"
    assert len(err.partial.rows) >= err.k - 1


def test_run_stall_detection():
    halve = OperatorHandle(apply=lambda x: 0.5 * x, name="halve")
    res = run(halve, np.ones(3), Schedule.constant(0.0, 0.5),
              StoppingRule(500, 0.0, stall_tol=1e-8), )
    assert res.status == "stalled"


def test_trace_row_definitions(lasso_default):
    inst = lasso_default
    sched = Schedule.constant(0.2, 0.5)
    res = run(inst.operator("fb"), inst.start_point("fb"), sched,
              StoppingRule(50, 0.0), p_ref=inst.fixed_point("fb"))
    rows = res.rows
    assert rows[0].step == 0.0
    assert rows[0].delta_k == 0.0
    assert rows[0].Delta_k == 0.0
    assert rows[0].C_k == pytest.approx(rows[0].dist_to_ref ** 2, rel=1e-12)
    for i in range(1, len(rows)):
        r, prev = rows[i], rows[i - 1]
        nu_prev = 1.0 / sched.lambda_at(r.k - 1) - 1.0
        a_prev = sched.alpha_at(r.k - 1)
        assert r.delta_k == pytest.approx(nu_prev * (1 - a_prev) * r.step ** 2, rel=1e-12)
        assert r.C_k == pytest.approx(
            r.dist_to_ref ** 2 - a_prev * prev.dist_to_ref ** 2 + r.delta_k, rel=1e-9, abs=1e-12)
        assert r.Delta_k == pytest.approx(
            r.dist_to_ref ** 2 - prev.dist_to_ref ** 2, rel=1e-9, abs=1e-12)
        assert r.k_step_sq == pytest.approx(r.k * r.step ** 2, rel=1e-12)
        assert r.k_res_sq == pytest.approx(r.k * r.residual ** 2, rel=1e-12)


def test_reconstruction_identity_along_trace(lasso_default):
    # lambda_k^2 res_k^2 == ||x_{k+1}-x_k||^2 + a^2 ||x_k-x_{k-1}||^2
    #                       - 2 a <x_{k+1}-x_k, x_k-x_{k-1}>
    inst = lasso_default
    sched = Schedule.constant(0.25, 0.6)
    res = run(inst.operator("fb"), inst.start_point("fb"), sched, StoppingRule(400, 0.0))
    xs = res.xs
    for k in range(1, len(xs) - 1):
        a = sched.alpha_at(k)
        lam = sched.lambda_at(k)
        d_next = xs[k] - xs[k - 1]
        d_prev = xs[k - 1] - (xs[k - 2] if k >= 2 else xs[0])
        rhs = norm(d_next) ** 2 + a * a * norm(d_prev) ** 2 - 2 * a * dot(d_next, d_prev)
        lhs = lam ** 2 * res.rows[k - 1].residual ** 2
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-18)


# --------------------------------------------------------------------------
# inequality replays


def test_descent_non_inertial_fb(lasso_default):
    inst = lasso_default
    res = run(inst.operator("fb"), inst.start_point("fb"), Schedule.constant(0.0, 0.5),
              StoppingRule(2000, 1e-11), p_ref=inst.fixed_point("fb"))
    rep = verify_descent(res)
    assert rep.ok
    assert rep.checked == len(res.xs) - 1


def test_descent_inertial_dr_feasibility():
    inst = problems.make_feasibility(20, 3)
    res = run(inst.operator("dr"), inst.start_point("dr"), Schedule.constant(0.2, 0.5),
              StoppingRule(10_000, 0.0), p_ref=inst.fixed_point("dr"))
    rep = verify_descent(res)
    assert rep.ok


def test_descent_rows_path_matches_exact_path(lasso_default):
    inst = lasso_default
    sched = Schedule.constant(0.2, 0.5)
    res = run(inst.operator("fb"), inst.start_point("fb"), sched,
              StoppingRule(500, 0.0), p_ref=inst.fixed_point("fb"))
    exact = verify_descent(res)
    recon = verify_descent(res.rows, schedule=sched)
    assert exact.ok and recon.ok
    assert recon.checked == exact.checked - 1  # rows path lacks the final iterate
    for l1v, l2v in zip(exact.lhs, recon.lhs):
        assert l1v == pytest.approx(l2v, rel=1e-6, abs=1e-9)


def test_descent_flags_corrupted_state(lasso_default):
    inst = lasso_default
    res = run(inst.operator("fb"), inst.start_point("fb"), Schedule.constant(0.2, 0.5),
              StoppingRule(200, 0.0), p_ref=inst.fixed_point("fb"))
    xs = [x.copy() for x in res.xs]
    j = 100  # corrupt x_{101}
    xs[j][0] += 1.0
    corrupted = RunResult(res.rows, xs, res.ys, res.status, res.schedule, res.p_ref, res.operator)
    rep = verify_descent(corrupted)
    assert rep.violations
    assert set(rep.violations) <= {j, j + 1, j + 2}


def test_descent_requires_fixed_point_reference(lasso_default):
    inst = lasso_default
    res = run(inst.operator("fb"), inst.start_point("fb"), Schedule.constant(0.0, 0.5),
              StoppingRule(50, 0.0), p_ref=inst.fixed_point("fb"))
    gen = SplitMix64(4)
    with pytest.raises(ValueError, match="not a fixed point"):
        verify_descent(res, p_ref=rand_vec(gen, 100))
    res_no_ref = run(inst.operator("fb"), inst.start_point("fb"),
                     Schedule.constant(0.0, 0.5), StoppingRule(50, 0.0))
    with pytest.raises(ValueError, match="p_ref"):
        verify_descent(res_no_ref)


def test_Ck_monotone_feasible_and_baseline(quad_50):
    inst = quad_50
    for alpha, lam in ((0.2, 0.5), (0.0, 0.9)):
        res = run(inst.operator("proximal"), inst.start_point("proximal"),
                  Schedule.constant(alpha, lam), StoppingRule(3000, 1e-13),
                  p_ref=inst.reference_solution)
        assert verify_Ck_monotone(res) is None


def test_Ck_monotone_reports_infeasible_schedule():
    inst = problems.make_quadratic(20, 1.0, 10.0, 3)
    res = run(inst.operator("proximal", rho=1.0), inst.start_point("proximal"),
              Schedule.constant(0.9, 0.99), StoppingRule(3000, 1e-13),
              p_ref=inst.reference_solution)
    assert res.status == "converged"  # run completes despite infeasibility
    assert verify_Ck_monotone(res) is not None


def test_Ck_monotone_requires_reference(lasso_default):
    res = run(lasso_default.operator("fb"), lasso_default.start_point("fb"),
              Schedule.constant(0.0, 0.5), StoppingRule(20, 0.0))
    with pytest.raises(ValueError):
        verify_Ck_monotone(res)


def test_contraction_and_product_bound_rows_path(quad_50):
    inst = quad_50
    T = inst.operator("gradient")
    sched = Schedule.constant(0.05, 0.9)
    res = run(T, inst.start_point("gradient"), sched, StoppingRule(500, 1e-12),
              p_ref=inst.reference_solution)
    exact = verify_contraction(res, T.q_factor, 1.0)
    recon = verify_contraction(res.rows, T.q_factor, 1.0, schedule=sched)
    assert exact.ok and recon.ok
    prod = verify_product_bound(res, T.q_factor, 1.0)
    assert prod.ok


# --------------------------------------------------------------------------
# small-o helper


def test_small_o_inverse_square_passes():
    assert small_o_check([1.0 / k ** 2 for k in range(1, 401)])


def test_small_o_harmonic_fails():
    assert not small_o_check([1.0 / k for k in range(1, 401)])


def test_small_o_validates_input():
    with pytest.raises(ValueError):
        small_o_check([1.0, 2.0, 1.0, 0.5])
    with pytest.raises(ValueError):
        small_o_check([1.0, 0.5, -0.1, 0.05])
    with pytest.raises(ValueError):
        small_o_check([1.0, 0.5])


def test_small_o_on_feasible_inertial_run(lasso_default):
    inst = lasso_default
    res = run(inst.operator("fb"), inst.start_point("fb"), Schedule.constant(0.2, 0.5),
              StoppingRule(20_000, 1e-10), p_ref=inst.fixed_point("fb"))
    assert res.status == "converged"
    assert small_o_check([r.step ** 2 for r in res.rows[1:]])
    assert small_o_check([r.residual ** 2 for r in res.rows])


# --------------------------------------------------------------------------
# picard helper


def test_picard_reaches_fixed_point(quad_50):
    inst = quad_50
    res = picard(inst.operator("gradient"), inst.start_point("gradient"), 1e-11, 10_000)
    assert res.status == "converged"
    assert norm(res.xs[0] - inst.reference_solution) <= 1e-9
