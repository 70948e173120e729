import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpgpd.cmdp import (BumpInitial, NavInitial, RegularizationParams, lambda_cap, regularized_reward,
                        translate_utility)
from dpgpd.lq import AffinePolicy
from dpgpd.rollout import RolloutConfig, RolloutEstimator

finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("u,b,gamma,expected", [(0.4, 1.0, 0.9, 0.3), (0.7, 0.0, 0.5, 0.7),
                                                (-1.2, -90.0, 0.95, 3.3)])
def test_translate_utility(u, b, gamma, expected):
    assert translate_utility(u, b, gamma) == pytest.approx(expected, abs=1e-12)


def test_translate_rejects_bad_gamma():
    with pytest.raises(ValueError):
        translate_utility(0.0, 1.0, 1.0)


@pytest.mark.parametrize("args,expected", [((1.0, 0.0, 0.0, 0.0, [0.0]), 1.0),
                                           ((0.0, 2.0, 0.5, 0.0, [0.0]), 1.0),
                                           ((1.0, 1.0, 1.0, 2.0, [1.0, 1.0]), 0.0)])
def test_regularized_reward_examples(args, expected):
    assert regularized_reward(*args) == pytest.approx(expected)


@given(finite, finite, st.floats(0, 100), st.lists(finite, min_size=1, max_size=4))
def test_regularized_reward_without_tau_is_lagrangian(r, g, lam, a):
    assert regularized_reward(r, g, lam, 0.0, a) == r + lam * g


def test_regularized_reward_broadcasts():
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    out = regularized_reward(np.array([1.0, 1.0]), np.array([0.0, 0.0]), 0.0, 1.0, a)
    np.testing.assert_allclose(out, [0.5, -1.0])


@pytest.mark.parametrize("gamma,xi,expected", [(0.9, 1.0, 10.0), (0.0, 2.0, 0.5), (0.5, 0.1, 20.0)])
def test_lambda_cap(gamma, xi, expected):
    assert lambda_cap(gamma, xi) == pytest.approx(expected)


@pytest.mark.parametrize("xi", [0.0, -1.0])
def test_lambda_cap_rejects_nonpositive_slack(xi):
    with pytest.raises(ValueError):
        lambda_cap(0.9, xi)


@given(st.floats(0, 0.49), st.floats(0.01, 0.49), st.floats(0.1, 10.0), st.floats(1.01, 2.0))
def test_lambda_cap_monotone(g1, dg, xi, f):
    assert lambda_cap(g1 + dg, xi) > lambda_cap(g1, xi)
    assert lambda_cap(g1, xi * f) < lambda_cap(g1, xi)


def test_params_from_instance(nav_instance):
    p = RegularizationParams.from_instance(nav_instance, 0.01, 0.01)
    assert p.lambda_max == pytest.approx(1.0 / ((1 - nav_instance.gamma) * nav_instance.slack))
    assert p.penalty_coef == pytest.approx(0.005 + 50.0)


@pytest.mark.parametrize("tau,eta", [(-0.1, 0.1), (0.1, 0.0), (0.1, -1.0)])
def test_params_validation(tau, eta):
    with pytest.raises(ValueError):
        RegularizationParams(tau, eta, 1.0)


def test_instance_translation_pointwise(nav_instance, rng):
    s = rng.normal(size=(20, 4))
    a = rng.normal(size=(20, 2))
    g = nav_instance.g(s, a)
    np.testing.assert_allclose(g, nav_instance.utility(s, a) - (1 - nav_instance.gamma) * nav_instance.b)
    with pytest.raises(KeyError):
        nav_instance.stream("nope")


@pytest.mark.parametrize("init", [NavInitial(), BumpInitial(tuple((np.arange(10) + 0.5) / 10))])
def test_initial_moments_match_samples(init):
    x = init.sample(np.random.default_rng(0), 200_000)
    np.testing.assert_allclose(x.mean(0), init.mean(), atol=0.03)
    np.testing.assert_allclose(x.T @ x / len(x), init.second_moment(), rtol=0.02, atol=0.02)


def test_vg_estimate_is_vu_minus_b(nav_instance):
    # shared streams: the per-rollout difference is exactly the translation constant summed over T steps
    pol = AffinePolicy(np.array([[-0.5, 0, -0.6, 0], [0, -0.5, 0, -0.6]]), np.zeros(2), 20.0)
    est = RolloutEstimator(nav_instance, RolloutConfig(nav_instance.gamma), np.random.default_rng(1))
    vals = est.v(pol, 4000, streams=("u", "g"))
    diff = vals[:, 1] - vals[:, 0]
    se = diff.std(ddof=1) / np.sqrt(len(diff))
    assert abs(diff.mean() + nav_instance.b) < 3 * se + 1e-9
