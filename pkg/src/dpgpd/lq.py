"""Closed-form policy evaluation for linear-Gaussian dynamics with quadratic rewards.

For an affine policy ``a = K s + k`` the value of the per-step reward
``s^T G s + a^T R a + const`` is the quadratic ``V(s) = s^T P s + p^T s + c``
where ``P`` solves the discounted Lyapunov equation
``P = G + K^T R K + gamma M^T P M`` with ``M = B0 + B1 K``.
Clipping to the action box is ignored by the evaluation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class UnstablePolicyError(ValueError):
    """The closed loop is not discounted-stable, so the value diverges."""


@dataclass(frozen=True, eq=False)
class AffinePolicy:
    K: np.ndarray
    k: np.ndarray
    action_bound: float

    @classmethod
    def zero(cls, state_dim: int, action_dim: int, action_bound: float) -> "AffinePolicy":
        return cls(np.zeros((action_dim, state_dim)), np.zeros(action_dim), action_bound)

    @property
    def state_dim(self) -> int:
        return self.K.shape[1]

    @property
    def action_dim(self) -> int:
        return self.K.shape[0]

    def unclipped(self, s):
        return np.asarray(s, dtype=float) @ self.K.T + self.k

    def act(self, s):
        return np.clip(self.unclipped(s), -self.action_bound, self.action_bound)

    __call__ = act

    def clip_active(self, s) -> bool:
        return bool(np.any(np.abs(self.unclipped(s)) > self.action_bound))


@dataclass(frozen=True, eq=False)
class QuadraticValue:
    """``V(s) = s^T P s + p^T s + c``."""

    P: np.ndarray
    p: np.ndarray
    c: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.einsum("...i,ij,...j->...", s, self.P, s) + s @ self.p + self.c

    def expected(self, initial) -> float:
        """Average over an initial distribution using its first two moments."""
        return float(np.sum(self.P * initial.second_moment()) + self.p @ initial.mean() + self.c)

    def combine(self, other: "QuadraticValue", weight: float) -> "QuadraticValue":
        """``self + weight * other``."""
        return QuadraticValue(self.P + weight * other.P, self.p + weight * other.p,
                              self.c + weight * other.c)


def closed_loop(env, policy: AffinePolicy) -> np.ndarray:
    return env.B0 + env.B1 @ policy.K


def eval_policy_quadratic(env, policy: AffinePolicy, G, R, gamma: float, const: float = 0.0) -> QuadraticValue:
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma}")
    G = np.asarray(G, dtype=float)
    R = np.asarray(R, dtype=float)
    K, k = policy.K, policy.k
    M = closed_loop(env, policy)
    radius = np.sqrt(gamma) * np.max(np.abs(np.linalg.eigvals(M))) if M.size else 0.0
    if radius >= 1.0:
        raise UnstablePolicyError(f"spectral radius of sqrt(gamma)*(B0 + B1 K) is {radius:.6f} >= 1")

    Qs = G + K.T @ R @ K
    Qs = 0.5 * (Qs + Qs.T)
    if gamma == 0.0:
        P = Qs
    else:
        # X = Qs + gamma M^T X M
        P = scipy.linalg.solve_discrete_lyapunov(np.sqrt(gamma) * M.T, Qs)
        P = 0.5 * (P + P.T)
    m = env.B1 @ k
    qs = 2.0 * K.T @ R @ k
    n = len(Qs)
    p = np.linalg.solve(np.eye(n) - gamma * M.T, qs + 2.0 * gamma * M.T @ P @ m)
    r0 = k @ R @ k + const
    c = (r0 + gamma * (m @ P @ m + np.sum(P * env.noise_cov) + p @ m)) / (1.0 - gamma)
    value = QuadraticValue(P, p, float(c))
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(p)) and np.isfinite(c)):
        raise UnstablePolicyError("non-finite value function")
    return value


def expected_next_value(value: QuadraticValue, env, s, a):
    """``E_w[V(B0 s + B1 a + w)]`` in closed form."""
    mu = np.asarray(s, dtype=float) @ env.B0.T + np.asarray(a, dtype=float) @ env.B1.T
    return value(mu) + np.sum(value.P * env.noise_cov)


def exact_q(value: QuadraticValue, env, G, R, gamma: float, s, a, const: float = 0.0):
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    if s.shape[-1] != env.state_dim or a.shape[-1] != env.action_dim:
        raise ValueError("state/action dimension mismatch")
    r = np.einsum("...i,ij,...j->...", s, G, s) + np.einsum("...i,ij,...j->...", a, R, a) + const
    return r + gamma * expected_next_value(value, env, s, a)


def bellman_residual(value: QuadraticValue, env, policy: AffinePolicy, G, R, gamma: float, s,
                     const: float = 0.0):
    """``V(s) - (r(s, pi(s)) + gamma E V(s'))`` using the unclipped policy."""
    a = policy.unclipped(s)
    return value(s) - exact_q(value, env, G, R, gamma, s, a, const)


def regularized_advantage(q_r, q_g, q_h, v_r, v_g, v_h, lam: float, tau: float, a, pi_a):
    """Regularized advantage from the separate value pieces of the current policy.

    ``q_h``/``v_h`` are the full values of the stream ``-||a||^2``.  The
    regularized Q and V carry the action regularizer for future steps only;
    the explicit ``-(tau/2)(||a||^2 - ||pi(s)||^2)`` term accounts for step 0,
    so the result equals the advantage of the composite reward
    ``r + lam g - (tau/2)||a||^2`` and vanishes at ``a = pi(s)``.
    """
    a2 = np.sum(np.asarray(a, dtype=float) ** 2, axis=-1)
    p2 = np.sum(np.asarray(pi_a, dtype=float) ** 2, axis=-1)
    q = q_r + lam * q_g + 0.5 * tau * (q_h + a2)
    v = v_r + lam * v_g + 0.5 * tau * (v_h + p2)
    return q - v - 0.5 * tau * (a2 - p2)


@dataclass(frozen=True, eq=False)
class ActionQuadratic:
    """Action dependence ``a^T H a + a^T (L s + l)`` of an advantage function."""

    H: np.ndarray
    L: np.ndarray
    l: np.ndarray

    def __call__(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        return np.einsum("...i,ij,...j->...", a, self.H, a) + np.sum(a * (s @ self.L.T + self.l), axis=-1)


def advantage_action_form(env, composite: QuadraticValue, R_lambda, tau: float, gamma: float) -> ActionQuadratic:
    """Quadratic-in-action part of the regularized advantage.

    ``composite`` is the full value of ``r + lam g - (tau/2)||a||^2`` under
    the current policy and ``R_lambda = R_r + lam R_g`` the action weight of
    ``r + lam g``.
    """
    B0, B1 = env.B0, env.B1
    P, p = composite.P, composite.p
    H = np.asarray(R_lambda, dtype=float) + gamma * B1.T @ P @ B1 - 0.5 * tau * np.eye(B1.shape[1])
    return ActionQuadratic(0.5 * (H + H.T), 2.0 * gamma * B1.T @ P @ B0, gamma * B1.T @ p)


@dataclass(frozen=True, eq=False)
class ProjectedAscentPolicy:
    """Fallback primal iterate: per-state projected gradient ascent of the subproblem."""

    form: ActionQuadratic
    previous: AffinePolicy
    eta: float
    action_bound: float
    iterations: int = 200
    fallback = True

    def act(self, s):
        s = np.asarray(s, dtype=float)
        prev = self.previous.act(s)
        H = self.form.H - np.eye(len(self.form.H)) / (2.0 * self.eta)
        lin = s @ self.form.L.T + self.form.l + prev / self.eta
        step = 1.0 / (2.0 * np.max(np.abs(np.linalg.eigvalsh(H))) + 1e-300)
        a = prev.copy()
        for _ in range(self.iterations):
            a = np.clip(a + step * (2.0 * a @ H + lin), -self.action_bound, self.action_bound)
        return a

    __call__ = act


def exact_primal_update(form: ActionQuadratic, policy: AffinePolicy, eta: float):
    """Maximize ``A(s, a) - ||a - pi(s)||^2 / (2 eta)`` for an action-quadratic advantage.

    Returns the clipped affine maximizer, or a :class:`ProjectedAscentPolicy`
    when the subproblem is not strictly concave.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    d = len(form.H)
    curv = np.eye(d) / eta - 2.0 * form.H
    curv = 0.5 * (curv + curv.T)
    if np.linalg.eigvalsh(curv).min() <= 0:
        log.warning("primal subproblem not strictly concave; using projected gradient ascent")
        return ProjectedAscentPolicy(form, policy, eta, policy.action_bound)
    K = np.linalg.solve(curv, form.L + policy.K / eta)
    k = np.linalg.solve(curv, form.l + policy.k / eta)
    return AffinePolicy(K, k, policy.action_bound)
