"""Primal-dual drivers: exact D-PGPD, model-based and sample-based AD-PGPD, and PGDual."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cmdp import CmdpInstance, RegularizationParams
from .envs import FluidStateReward, QuadraticReward
from .features import FeatureMap, LinearModel, projected_sgd
from .lq import (AffinePolicy, UnstablePolicyError, advantage_action_form, eval_policy_quadratic,
                 exact_primal_update)
from .records import DriverAbort, Row, RunRecord, potential_phi
from .rollout import RolloutConfig, RolloutEstimator

log = logging.getLogger(__name__)


def dual_update(lam: float, v_g: float, tau: float, eta: float, lambda_max: float) -> float:
    """Closed-form argmin of ``l (v_g + tau lam) + (l - lam)^2 / (2 eta)`` over ``[0, lambda_max]``."""
    return float(min(max(lam - eta * (v_g + tau * lam), 0.0), lambda_max))


class ImplicitPolicy:
    """Greedy policy ``argmax_a phi(s, a)^T theta - penalty ||a||^2`` over the action box.

    The objective is quadratic in ``a``.  When it is strictly concave the
    unconstrained maximizer is affine in ``s``; rows that leave the box are
    clipped and, if the curvature couples coordinates, polished by projected
    gradient ascent.  Otherwise every state is solved by projected gradient
    ascent from ``a = 0`` and ``fallback`` is set.
    """

    def __init__(self, theta, fmap: FeatureMap, penalty: float, action_bound: float,
                 inner_steps: int = 200):
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise ValueError("non-finite model coefficients")
        self.theta = theta
        self.fmap = fmap
        self.penalty = float(penalty)
        self.action_bound = float(action_bound)
        self.inner_steps = inner_steps
        _, W_sa, W_aa, _, w_a, _ = fmap.blocks(theta)
        self.H = W_aa
        self.L = W_sa.T
        self.w = w_a
        da = len(W_aa)
        curv = self.penalty * np.eye(da) - W_aa
        eig = np.linalg.eigvalsh(curv)
        self._lip = 2.0 * float(np.max(np.abs(eig))) if da else 0.0
        tol = 1e-12 * max(1.0, float(np.max(np.abs(eig))))
        self.concave = bool(eig.min() > tol)
        self.fallback = not self.concave
        self._coupled = bool(np.any(np.abs(W_aa - np.diag(np.diag(W_aa))) > 0))
        if self.concave:
            self.F = np.linalg.solve(curv, self.L)
            self.f = np.linalg.solve(curv, self.w)

    def affine(self) -> AffinePolicy | None:
        """The unclipped maximizer as an :class:`AffinePolicy`, or ``None`` when not concave."""
        if not self.concave:
            return None
        return AffinePolicy(self.F, self.f, self.action_bound)

    def _ascent(self, s, a):
        if self._lip == 0.0:
            return a
        A = self.action_bound
        lin = 2.0 * (s @ self.L.T + self.w)
        G = 2.0 * (self.H - self.penalty * np.eye(len(self.H)))
        step = 1.0 / self._lip
        for _ in range(self.inner_steps):
            nxt = np.clip(a + step * (a @ G + lin), -A, A)
            done = np.max(np.abs(nxt - a)) <= 1e-13 * (1.0 + A)
            a = nxt
            if done:
                break
        return a

    def act(self, s):
        s = np.asarray(s, dtype=float)
        single = s.ndim == 1
        s2 = np.atleast_2d(s)
        A = self.action_bound
        if self.concave:
            raw = s2 @ self.F.T + self.f
            a = np.clip(raw, -A, A)
            if self._coupled:
                hit = np.any(np.abs(raw) > A, axis=1)
                if hit.any():
                    a[hit] = self._ascent(s2[hit], a[hit])
        else:
            a = self._ascent(s2, np.zeros((len(s2), len(self.H))))
        return a[0] if single else a

    __call__ = act

    def objective(self, s, a):
        return self.fmap(s, a) @ self.theta - self.penalty * np.sum(np.asarray(a) ** 2, axis=-1)


def approx_primal_update(theta, params: RegularizationParams, fmap: FeatureMap, s, action_bound: float):
    """Action maximizing ``J_theta(s, a) - (tau/2 + 1/(2 eta)) ||a||^2`` over the box."""
    return ImplicitPolicy(theta, fmap, params.penalty_coef, action_bound).act(s)


# ---------------------------------------------------------------------------
# options and samplers

@dataclass(frozen=True)
class SolverOptions:
    kappa0: float = 1.0
    step_multiplier: float = 1.0
    theta_max: float = 1e8
    augment_bias: bool = True
    dual_rollouts: int = 10
    max_horizon: int = 10_000
    normalized_return: bool = False
    sgd_init: str = "proximal"   # "zero" or "proximal"
    model_fit: str = "exact"     # model-based only: "exact" or "sgd"
    sample_state_bound: float = 5.0


@dataclass(frozen=True)
class BoxSampler:
    """Uniform over ``[-state_bound, state_bound]^ds x [-action_bound, action_bound]^da``."""

    state_dim: int
    action_dim: int
    state_bound: float
    action_bound: float

    def sample(self, rng: np.random.Generator, n: int):
        s = rng.uniform(-self.state_bound, self.state_bound, size=(n, self.state_dim))
        a = rng.uniform(-self.action_bound, self.action_bound, size=(n, self.action_dim))
        return s, a


def feature_map_for(instance: CmdpInstance, opts: SolverOptions) -> FeatureMap:
    return FeatureMap.normalized(instance.state_dim, instance.action_dim, opts.sample_state_bound,
                                 instance.action_bound, opts.augment_bias)


def sampler_for(instance: CmdpInstance, opts: SolverOptions) -> BoxSampler:
    return BoxSampler(instance.state_dim, instance.action_dim, opts.sample_state_bound, instance.action_bound)


def _affine_part(policy):
    if isinstance(policy, AffinePolicy):
        return policy
    if isinstance(policy, ImplicitPolicy):
        return policy.affine()
    return None


def proximal_coefficients(fmap: FeatureMap, policy, params: RegularizationParams) -> np.ndarray:
    """Coefficients of the exactly known target part ``(tau/2)||a||^2 + pi(s)^T a / eta``.

    Only the affine part of ``policy`` is representable; the zero vector is
    returned when the policy has none.
    """
    aff = _affine_part(policy)
    n = fmap.z_dim
    ds, da = fmap.state_dim, fmap.action_dim
    W = np.zeros((n, n))
    A = slice(ds, ds + da)
    W[A, A] = 0.5 * params.tau * np.eye(da)
    if aff is not None:
        W[A, :ds] = aff.K / (2.0 * params.eta)
        W[:ds, A] = W[A, :ds].T
        if fmap.augment_bias:
            W[A, -1] = aff.k / (2.0 * params.eta)
            W[-1, A] = W[A, -1]
    return fmap.from_matrix(W)


def augmented_targets(estimator: RolloutEstimator, policy, lam: float, params: RegularizationParams, s, a):
    """Sampled ``J(s, a) = Q_{lam,tau}(s, a) + pi(s)^T a / eta``.

    The rollout accumulates the composite reward at every step; adding back
    ``(tau/2)||a||^2`` removes the step-0 action regularizer, which the primal
    subproblem accounts for explicitly.
    """
    q = estimator.q(policy, s, a, streams=("lagrangian",), lam=lam, tau=params.tau)[:, 0]
    return q + 0.5 * params.tau * np.sum(a * a, axis=1) + np.sum(policy(s) * a, axis=1) / params.eta


def fit_augmented_model(fmap, sampler, rng: np.random.Generator, target_fn, N: int, kappa0: float = 1.0,
                        theta_max: float = 1e8, theta0=None, multiplier: float = 1.0) -> LinearModel:
    """Projected SGD on ``N`` samples ``(s_n, a_n) ~ sampler`` with targets ``target_fn(s, a)``.

    Returns the weighted average of the SGD iterates.
    """
    if N < 1:
        raise ValueError("need N >= 1")
    s, a = sampler.sample(rng, N)
    targets = np.asarray(target_fn(s, a), dtype=float)
    theta = projected_sgd(fmap(s, a), targets, kappa0, theta_max, theta0, multiplier)
    return LinearModel(theta, theta_max)


# ---------------------------------------------------------------------------
# exact machinery for linear-Gaussian / quadratic instances

def _quadratic(spec):
    if isinstance(spec, QuadraticReward):
        return spec
    if isinstance(spec, FluidStateReward):
        return spec.as_quadratic()
    raise TypeError(f"closed-form evaluation needs a quadratic reward, got {type(spec).__name__}")


def lagrangian_values(instance: CmdpInstance, policy: AffinePolicy):
    """Closed-form values of the reward, translated utility and ``-||a||^2`` streams."""
    env, gamma = instance.env, instance.gamma
    r = _quadratic(instance.reward)
    u = _quadratic(instance.utility)
    da = instance.action_dim
    vr = eval_policy_quadratic(env, policy, r.G, r.R, gamma, r.const)
    vg = eval_policy_quadratic(env, policy, u.G, u.R, gamma, u.const - (1.0 - gamma) * instance.b)
    vh = eval_policy_quadratic(env, policy, np.zeros((instance.state_dim,) * 2), -np.eye(da), gamma)
    return vr, vg, vh


def augmented_value_matrix(instance: CmdpInstance, policy: AffinePolicy, composite, lam: float,
                           eta: float) -> np.ndarray:
    """Exact ``J(s, a) = Q_{lam,tau}(s, a) + pi(s)^T a / eta`` as ``z^T W z`` with ``z = [s, a, 1]``."""
    env, gamma = instance.env, instance.gamma
    r = _quadratic(instance.reward)
    u = _quadratic(instance.utility)
    B0, B1 = env.B0, env.B1
    P, p, c = composite.P, composite.p, composite.c
    ds, da = instance.state_dim, instance.action_dim
    G = r.G + lam * u.G
    R = r.R + lam * u.R
    const = r.const + lam * (u.const - (1.0 - gamma) * instance.b)
    W = np.zeros((ds + da + 1,) * 2)
    S, A = slice(0, ds), slice(ds, ds + da)
    W[S, S] = G + gamma * B0.T @ P @ B0
    W[A, A] = R + gamma * B1.T @ P @ B1
    W[S, A] = gamma * B0.T @ P @ B1
    W[A, S] = gamma * B1.T @ P @ B0 + policy.K / (2.0 * eta)
    W[S, A] += policy.K.T / (2.0 * eta)
    W[S, -1] = W[-1, S] = 0.5 * gamma * B0.T @ p
    W[A, -1] = W[-1, A] = 0.5 * gamma * B1.T @ p + policy.k / (2.0 * eta)
    W[-1, -1] = const + gamma * (np.sum(P * env.noise_cov) + c)
    return 0.5 * (W + W.T)


def _phi_value(reference, probes, policy, lam, params):
    if reference is None:
        return float("nan")
    ref_policy, ref_lam = reference
    return potential_phi(policy, lam, ref_policy, ref_lam, params.eta, params.tau, probes)


def run_dpgpd_exact(instance: CmdpInstance, params: RegularizationParams, T: int, seed: int = 0,
                    reference=None, probes=None, force_lambda=None) -> RunRecord:
    """D-PGPD with closed-form advantages and exact ``V_g`` in the dual step.

    ``force_lambda`` pins the multiplier (e.g. 0 for the unconstrained problem).
    """
    if params.eta <= 0:
        raise ValueError("eta must be positive")
    gamma = instance.gamma
    r = _quadratic(instance.reward)
    u = _quadratic(instance.utility)
    policy = AffinePolicy.zero(instance.state_dim, instance.action_dim, instance.action_bound)
    lam = 0.0 if force_lambda is None else float(force_lambda)
    rec = RunRecord(seed=seed, meta={"driver": "dpgpd_exact"})
    for t in range(T):
        try:
            vr, vg, vh = lagrangian_values(instance, policy)
        except UnstablePolicyError as exc:
            raise DriverAbort(f"unstable policy iterate: {exc}", iteration=t, seed=seed) from exc
        Vr, Vg = vr.expected(instance.initial), vg.expected(instance.initial)
        rec.rows.append(Row(t, seed, Vr, Vg, lam, _phi_value(reference, probes, policy, lam, params), 0, 0))
        composite = vr.combine(vg, lam).combine(vh, 0.5 * params.tau)
        form = advantage_action_form(instance.env, composite, r.R + lam * u.R, params.tau, gamma)
        new_policy = exact_primal_update(form, policy, params.eta)
        if not isinstance(new_policy, AffinePolicy):
            raise DriverAbort("primal subproblem lost concavity; exact evaluation impossible",
                              iteration=t, seed=seed)
        if force_lambda is None:
            lam = dual_update(lam, Vg, params.tau, params.eta, params.lambda_max)
        policy = new_policy
    rec.final_policy, rec.final_lambda = policy, lam
    return rec


def run_adpgpd(instance: CmdpInstance, params: RegularizationParams, T: int, N: int = 200, seed: int = 0,
               mode: str = "sample_based", opts: SolverOptions = SolverOptions(), reference=None,
               probes=None) -> RunRecord:
    """AD-PGPD with a linear model over quadratic features.

    ``model_based`` uses closed-form Q and V_g (linear-Gaussian instances);
    ``sample_based`` uses geometric-horizon rollouts throughout.
    """
    if mode not in ("model_based", "sample_based"):
        raise ValueError(f"unknown mode {mode!r}")
    root = np.random.SeedSequence(seed)
    env_rng, roll_rng, nu_rng = (np.random.default_rng(c) for c in root.spawn(3))
    instance.env.reseed(env_rng)
    fmap = feature_map_for(instance, opts)
    sampler = sampler_for(instance, opts)
    est = RolloutEstimator(instance, RolloutConfig(instance.gamma, opts.max_horizon,
                                                   normalized_return=opts.normalized_return), roll_rng)
    policy = AffinePolicy.zero(instance.state_dim, instance.action_dim, instance.action_bound)
    lam = 0.0
    fallbacks = 0
    rec = RunRecord(seed=seed, meta={"driver": f"adpgpd_{'model' if mode == 'model_based' else 'sample'}"})
    for t in range(T):
        caps_before = est.cap_hits
        if mode == "model_based":
            try:
                vr, vg, vh = lagrangian_values(instance, policy)
            except UnstablePolicyError as exc:
                raise DriverAbort(f"unstable policy iterate: {exc}", iteration=t, seed=seed) from exc
            Vr, Vg = vr.expected(instance.initial), vg.expected(instance.initial)
            composite = vr.combine(vg, lam).combine(vh, 0.5 * params.tau)
            W = augmented_value_matrix(instance, policy, composite, lam, params.eta)
            if not fmap.augment_bias:
                W = W[:-1, :-1]
            if opts.model_fit == "exact":
                theta = fmap.from_matrix(W)
            else:
                z_fmap = FeatureMap(fmap.state_dim, fmap.action_dim, fmap.augment_bias, 1.0)
                exact_j = lambda s, a: np.einsum("ni,ij,nj->n", z_fmap.z(s, a), W, z_fmap.z(s, a))
                theta0 = proximal_coefficients(fmap, policy, params) if opts.sgd_init == "proximal" else None
                theta = fit_augmented_model(fmap, sampler, nu_rng, exact_j, N, opts.kappa0, opts.theta_max,
                                            theta0, opts.step_multiplier).theta
        else:
            vals = est.v(policy, opts.dual_rollouts, streams=("r", "g"))
            Vr, Vg = float(np.mean(vals[:, 0])), float(np.mean(vals[:, 1]))
            theta0 = proximal_coefficients(fmap, policy, params) if opts.sgd_init == "proximal" else None
            target = lambda s, a: augmented_targets(est, policy, lam, params, s, a)
            theta = fit_augmented_model(fmap, sampler, nu_rng, target, N, opts.kappa0, opts.theta_max,
                                        theta0, opts.step_multiplier).theta
        if not np.all(np.isfinite(theta)) or not np.isfinite(Vg):
            raise DriverAbort("non-finite model coefficients or value estimate", iteration=t, seed=seed)
        rec.rows.append(Row(t, seed, Vr, Vg, lam, _phi_value(reference, probes, policy, lam, params),
                            fallbacks, est.cap_hits - caps_before))
        implicit = ImplicitPolicy(theta, fmap, params.penalty_coef, instance.action_bound)
        fallbacks = int(implicit.fallback)
        if mode == "model_based":
            nxt = implicit.affine()
            if nxt is None:
                raise DriverAbort("fitted model is not concave in the action", iteration=t, seed=seed)
        else:
            nxt = implicit
        lam = dual_update(lam, Vg, params.tau, params.eta, params.lambda_max)
        policy = nxt
    rec.final_policy, rec.final_lambda = policy, lam
    rec.meta["clamp_events"] = instance.env.clamp_events
    return rec


def run_pgdual(instance: CmdpInstance, params: RegularizationParams, T: int, N: int = 200, seed: int = 0,
               opts: SolverOptions = SolverOptions(), reference=None, probes=None) -> RunRecord:
    """Dual baseline: fit Q of ``r + lam g``, act greedily on the fit, plain projected dual descent."""
    root = np.random.SeedSequence(seed)
    env_rng, roll_rng, nu_rng = (np.random.default_rng(c) for c in root.spawn(3))
    instance.env.reseed(env_rng)
    fmap = feature_map_for(instance, opts)
    sampler = sampler_for(instance, opts)
    est = RolloutEstimator(instance, RolloutConfig(instance.gamma, opts.max_horizon,
                                                   normalized_return=opts.normalized_return), roll_rng)
    policy = AffinePolicy.zero(instance.state_dim, instance.action_dim, instance.action_bound)
    lam = 0.0
    fallbacks = 0
    rec = RunRecord(seed=seed, meta={"driver": "pgdual"})
    for t in range(T):
        caps_before = est.cap_hits
        vals = est.v(policy, opts.dual_rollouts, streams=("r", "g"))
        Vr, Vg = float(np.mean(vals[:, 0])), float(np.mean(vals[:, 1]))
        target = lambda s, a: est.q(policy, s, a, streams=("lagrangian",), lam=lam, tau=0.0)[:, 0]
        theta = fit_augmented_model(fmap, sampler, nu_rng, target, N, opts.kappa0, opts.theta_max,
                                    None, opts.step_multiplier).theta
        if not np.all(np.isfinite(theta)) or not np.isfinite(Vg):
            raise DriverAbort("non-finite model coefficients or value estimate", iteration=t, seed=seed)
        rec.rows.append(Row(t, seed, Vr, Vg, lam, _phi_value(reference, probes, policy, lam, params),
                            fallbacks, est.cap_hits - caps_before))
        policy = ImplicitPolicy(theta, fmap, 0.0, instance.action_bound)
        fallbacks = int(policy.fallback)
        lam = float(min(max(lam - params.eta * Vg, 0.0), params.lambda_max))
    rec.final_policy, rec.final_lambda = policy, lam
    rec.meta["clamp_events"] = instance.env.clamp_events
    return rec
