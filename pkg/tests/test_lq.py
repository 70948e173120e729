import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpgpd.envs import LinearGaussianEnv, nav_build, nav_rewards
from dpgpd.lq import (ActionQuadratic, AffinePolicy, ProjectedAscentPolicy, QuadraticValue, UnstablePolicyError,
                      advantage_action_form, bellman_residual, eval_policy_quadratic, exact_primal_update, exact_q,
                      regularized_advantage)
from dpgpd.oracles import box_grid_argmax, point_value, truncated_moment_value
from dpgpd.rollout import RolloutConfig, RolloutEstimator, visitation_states

G1, R1 = nav_rewards("quadratic")[0].G, nav_rewards("quadratic")[0].R


def scalar_env(b0=0.5, b1=0.0, var=0.0):
    return LinearGaussianEnv([[b0]], [[b1]], [[var]])


def test_scalar_fixed_point():
    v = eval_policy_quadratic(scalar_env(), AffinePolicy.zero(1, 1, 1.0), [[-1.0]], [[0.0]], 0.5)
    assert abs(v.P[0, 0] - (-8.0 / 7.0)) < 1e-10
    assert v.c == 0.0 and v.p[0] == 0.0


def test_gamma_zero_is_one_step(rng):
    env = nav_build(0.05)
    K, k = rng.normal(size=(2, 4)), rng.normal(size=2)
    pol = AffinePolicy(K, k, 100.0)
    v = eval_policy_quadratic(env, pol, G1, R1, 0.0)
    np.testing.assert_allclose(v.P, G1 + K.T @ R1 @ K)
    np.testing.assert_allclose(v.p, 2 * K.T @ R1 @ k)
    assert v.c == pytest.approx(k @ R1 @ k)
    s = rng.normal(size=(5, 4))
    a = rng.normal(size=(5, 2))
    q = exact_q(v, env, G1, R1, 0.0, s, a)
    np.testing.assert_allclose(q, np.einsum("ni,ij,nj->n", s, G1, s) + np.einsum("ni,ij,nj->n", a, R1, a))


def test_unstable_policy_rejected():
    env = scalar_env(b0=1.5)
    with pytest.raises(UnstablePolicyError):
        eval_policy_quadratic(env, AffinePolicy.zero(1, 1, 1.0), [[-1.0]], [[0.0]], 0.95)


def test_bellman_residual_nav(stabilizing_K, rng):
    env = nav_build(0.05)
    pol = AffinePolicy(stabilizing_K, np.array([0.3, -0.2]), 1e6)
    v = eval_policy_quadratic(env, pol, G1, R1, 0.95, const=0.5)
    s = rng.uniform(-5, 5, size=(100, 4))
    assert np.max(np.abs(bellman_residual(v, env, pol, G1, R1, 0.95, s, const=0.5))) < 1e-8
    np.testing.assert_allclose(v.P, v.P.T)


def test_matches_moment_oracle(stabilizing_K, rng):
    env = nav_build(0.05)
    pol = AffinePolicy(stabilizing_K, np.array([0.3, -0.2]), 1e6)
    v = eval_policy_quadratic(env, pol, G1, R1, 0.95)
    for s in rng.uniform(-5, 5, size=(5, 4)):
        assert v(s) == pytest.approx(point_value(env, pol, G1, R1, 0.95, s), rel=1e-9)


def test_monte_carlo_value_at_probes(stabilizing_K):
    env = nav_build(0.05, rng=np.random.default_rng(21))
    from dpgpd.harness import build_instance, preset
    inst = build_instance(preset("nav-quadratic").replace(gamma=0.95)).with_env(env)
    pol = AffinePolicy(stabilizing_K, np.zeros(2), 1e6)
    v = eval_policy_quadratic(env, pol, G1, R1, 0.95)
    est = RolloutEstimator(inst, RolloutConfig(0.95), np.random.default_rng(5))
    for s in np.random.default_rng(2).uniform(-3, 3, size=(5, 4)):
        x = est.v(pol, 10_000, initial_states=np.tile(s, (10_000, 1)))[:, 0]
        se = x.std(ddof=1) / np.sqrt(len(x))
        assert abs(x.mean() - v(s)) < 3 * se


def test_on_policy_q_equals_v(stabilizing_K, rng):
    env = nav_build(0.05)
    pol = AffinePolicy(stabilizing_K, np.array([0.1, 0.2]), 1e6)
    v = eval_policy_quadratic(env, pol, G1, R1, 0.9)
    s = rng.normal(size=(10, 4))
    np.testing.assert_allclose(exact_q(v, env, G1, R1, 0.9, s, pol(s)), v(s), rtol=1e-12)


def test_exact_q_monte_carlo_scalar(scalar):
    pol = AffinePolicy(np.array([[-0.2]]), np.array([0.1]), 10.0)
    r = scalar.reward
    v = eval_policy_quadratic(scalar.env, pol, r.G, r.R, scalar.gamma)
    est = RolloutEstimator(scalar, RolloutConfig(scalar.gamma), np.random.default_rng(8))
    for s, a in [(0.7, -0.3), (-1.2, 0.8)]:
        n = 100_000
        x = est.q(pol, np.full((n, 1), s), np.full((n, 1), a))[:, 0]
        exact = exact_q(v, scalar.env, r.G, r.R, scalar.gamma, np.array([s]), np.array([a]))
        assert abs(x.mean() - exact) < 3 * x.std(ddof=1) / np.sqrt(n)


def test_dimension_mismatch():
    env = nav_build(0.05)
    v = QuadraticValue(np.zeros((4, 4)), np.zeros(4), 0.0)
    with pytest.raises(ValueError):
        exact_q(v, env, G1, R1, 0.9, np.zeros(3), np.zeros(2))


def _pieces(inst, pol):
    from dpgpd.pgpd import lagrangian_values
    return lagrangian_values(inst, pol)


def test_regularized_advantage_vanishes_on_policy(nav_instance, stabilizing_K, rng):
    pol = AffinePolicy(stabilizing_K, np.zeros(2), 20.0)
    vr, vg, vh = _pieces(nav_instance, pol)
    s = rng.normal(size=(10, 4))
    a = pol(s)
    env, gm = nav_instance.env, nav_instance.gamma
    r, u = nav_instance.reward, nav_instance.utility
    qr = exact_q(vr, env, r.G, r.R, gm, s, a)
    gc = u.const - (1 - gm) * nav_instance.b
    qg = exact_q(vg, env, u.G, u.R, gm, s, a, gc)
    qh = exact_q(vh, env, np.zeros((4, 4)), -np.eye(2), gm, s, a)
    adv = regularized_advantage(qr, qg, qh, vr(s), vg(s), vh(s), 0.3, 0.01, a, a)
    np.testing.assert_allclose(adv, 0.0, atol=1e-8)
    plain = regularized_advantage(qr + 1.0, qg, qh, vr(s), vg(s), vh(s), 0.0, 0.0, a, a)
    np.testing.assert_allclose(plain, 1.0, atol=1e-8)


def test_advantage_form_matches_composition(nav_instance, stabilizing_K, rng):
    # the action-quadratic form must reproduce A(s, a) - A(s, pi(s)) computed from exact_q pieces
    pol = AffinePolicy(stabilizing_K, np.array([0.2, -0.1]), 20.0)
    lam, tau = 0.4, 0.05
    vr, vg, vh = _pieces(nav_instance, pol)
    env, gm = nav_instance.env, nav_instance.gamma
    r, u = nav_instance.reward, nav_instance.utility
    gc = u.const - (1 - gm) * nav_instance.b
    comp = vr.combine(vg, lam).combine(vh, 0.5 * tau)
    form = advantage_action_form(env, comp, r.R + lam * u.R, tau, gm)
    s = rng.normal(size=(20, 4))
    a = rng.normal(size=(20, 2))
    pa = pol(s)
    qr = exact_q(vr, env, r.G, r.R, gm, s, a)
    qg = exact_q(vg, env, u.G, u.R, gm, s, a, gc)
    qh = exact_q(vh, env, np.zeros((4, 4)), -np.eye(2), gm, s, a)
    adv = regularized_advantage(qr, qg, qh, vr(s), vg(s), vh(s), lam, tau, a, pa)
    np.testing.assert_allclose(adv, form(s, a) - form(s, pa), atol=1e-9)


def test_primal_update_trivial_examples():
    zero = AffinePolicy.zero(1, 1, 10.0)
    form = ActionQuadratic(np.array([[-1.0]]), np.zeros((1, 1)), np.zeros(1))
    for eta in (0.1, 1.0, 7.0):
        assert exact_primal_update(form, zero, eta)(np.array([3.0]))[0] == 0.0
    form = ActionQuadratic(np.array([[-1.0]]), np.array([[2.0]]), np.zeros(1))
    new = exact_primal_update(form, zero, 1.0)
    np.testing.assert_allclose(new.K, [[2.0 / 3.0]])
    assert new(np.array([100.0]))[0] == 10.0


def test_primal_update_rejects_eta():
    form = ActionQuadratic(np.array([[-1.0]]), np.zeros((1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        exact_primal_update(form, AffinePolicy.zero(1, 1, 1.0), 0.0)


def test_primal_update_constant_invariance(nav_instance, stabilizing_K):
    pol = AffinePolicy(stabilizing_K, np.zeros(2), 20.0)
    vr, vg, vh = _pieces(nav_instance, pol)
    comp = vr.combine(vg, 0.2)
    R = nav_instance.reward.R + 0.2 * nav_instance.utility.R
    shifted = QuadraticValue(comp.P, comp.p, comp.c + 123.0)
    a = exact_primal_update(advantage_action_form(nav_instance.env, comp, R, 0.01, 0.9), pol, 0.01)
    b = exact_primal_update(advantage_action_form(nav_instance.env, shifted, R, 0.01, 0.9), pol, 0.01)
    np.testing.assert_array_equal(a.K, b.K)
    np.testing.assert_array_equal(a.k, b.k)


@pytest.mark.parametrize("eta", [0.01, 0.5])
def test_primal_update_matches_grid(nav_instance, stabilizing_K, eta):
    A = 20.0
    pol = AffinePolicy(stabilizing_K, np.array([0.5, -0.5]), A)
    vr, vg, vh = _pieces(nav_instance, pol)
    lam, tau = 0.3, 0.01
    comp = vr.combine(vg, lam).combine(vh, 0.5 * tau)
    form = advantage_action_form(nav_instance.env, comp,
                                 nav_instance.reward.R + lam * nav_instance.utility.R, tau, 0.9)
    new = exact_primal_update(form, pol, eta)
    probes = np.random.default_rng(4).uniform(-5, 5, size=(10, 4))
    for s in probes:
        obj = lambda a: (np.einsum("ni,ij,nj->n", a, form.H, a) + a @ (form.L @ s + form.l)
                         - np.sum((a - pol(s)) ** 2, axis=1) / (2 * eta))
        ref = box_grid_argmax(obj, 2, A, pitch=1e-3)
        assert np.max(np.abs(new(s) - ref)) <= 2e-3


def test_nonconcave_falls_back():
    form = ActionQuadratic(np.array([[5.0]]), np.zeros((1, 1)), np.array([1.0]))
    pol = AffinePolicy.zero(1, 1, 2.0)
    new = exact_primal_update(form, pol, 1.0)
    assert isinstance(new, ProjectedAscentPolicy) and new.fallback
    assert new(np.array([[0.0]]))[0, 0] == pytest.approx(2.0)


@given(arrays(np.float64, (2, 4), elements=st.floats(-50, 50)), arrays(np.float64, 2, elements=st.floats(-50, 50)),
       arrays(np.float64, (8, 4), elements=st.floats(-100, 100)))
def test_policy_actions_in_box(K, k, s):
    pol = AffinePolicy(K, k, 3.0)
    assert np.all(np.abs(pol(s)) <= 3.0)


def test_performance_difference_identity(scalar):
    # V(pi') - V(pi) = E_{d^{pi'}}[A^pi(s, pi'(s))] / (1 - gamma), composite reward with tau > 0
    gm = scalar.gamma
    lam, tau = 0.5, 0.2
    pi = AffinePolicy(np.array([[-0.2]]), np.array([0.1]), 10.0)
    pi2 = AffinePolicy(np.array([[-0.4]]), np.array([-0.1]), 10.0)
    vals = {}
    for name, p in (("pi", pi), ("pi2", pi2)):
        vr, vg, vh = _pieces(scalar, p)
        vals[name] = (vr, vg, vh, vr.combine(vg, lam).combine(vh, 0.5 * tau))
    lhs = vals["pi2"][3].expected(scalar.initial) - vals["pi"][3].expected(scalar.initial)
    vr, vg, vh, comp = vals["pi"]
    form = advantage_action_form(scalar.env, comp, scalar.reward.R + lam * scalar.utility.R, tau, gm)
    scalar.env.reseed(np.random.default_rng(99))
    s = visitation_states(scalar, pi2, np.random.default_rng(100), 100_000)
    adv = form(s, pi2(s)) - form(s, pi(s))
    rhs = adv / (1 - gm)
    se = rhs.std(ddof=1) / np.sqrt(len(rhs))
    assert abs(rhs.mean() - lhs) < 3 * se
