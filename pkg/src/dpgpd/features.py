"""Quadratic Kronecker features, the linear value model and projected SGD."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureMap:
    """``phi(s, a) = scale * (z kron z)`` with ``z = [s, a, 1]`` (bias optional)."""

    state_dim: int
    action_dim: int
    augment_bias: bool = True
    scale: float = 1.0

    @classmethod
    def normalized(cls, state_dim, action_dim, state_bound, action_bound, augment_bias=True) -> "FeatureMap":
        """Scale chosen so that ``||phi|| <= 1`` on the box ``|s_i| <= state_bound, |a_j| <= action_bound``."""
        zmax = state_dim * state_bound ** 2 + action_dim * action_bound ** 2 + int(augment_bias)
        return cls(state_dim, action_dim, augment_bias, 1.0 / zmax)

    @property
    def z_dim(self) -> int:
        return self.state_dim + self.action_dim + int(self.augment_bias)

    @property
    def dim(self) -> int:
        return self.z_dim ** 2

    def z(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        if s.shape[-1] != self.state_dim or a.shape[-1] != self.action_dim:
            raise ValueError(f"feature map expects ({self.state_dim}, {self.action_dim}) dims, "
                             f"got {s.shape[-1]} and {a.shape[-1]}")
        parts = [s, a]
        if self.augment_bias:
            parts.append(np.ones(s.shape[:-1] + (1,)))
        return np.concatenate(parts, axis=-1)

    def __call__(self, s, a):
        z = self.z(s, a)
        outer = z[..., :, None] * z[..., None, :]
        return self.scale * outer.reshape(z.shape[:-1] + (self.dim,))

    # coefficient <-> quadratic-form conversions; J(s, a) = z^T W z
    def to_matrix(self, theta) -> np.ndarray:
        W = self.scale * np.asarray(theta, dtype=float).reshape(self.z_dim, self.z_dim)
        return 0.5 * (W + W.T)

    def from_matrix(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        return (0.5 * (W + W.T)).ravel() / self.scale

    def blocks(self, theta):
        """(W_ss, W_sa, W_aa, w_s, w_a, w_0) of the symmetric form behind ``theta``."""
        W = self.to_matrix(theta)
        ds, da = self.state_dim, self.action_dim
        S, A = slice(0, ds), slice(ds, ds + da)
        if self.augment_bias:
            w_s, w_a, w_0 = W[S, -1], W[A, -1], W[-1, -1]
        else:
            w_s, w_a, w_0 = np.zeros(ds), np.zeros(da), 0.0
        return W[S, S], W[S, A], W[A, A], w_s, w_a, float(w_0)


def phi(fmap: FeatureMap, s, a):
    return fmap(s, a)


@dataclass(frozen=True, eq=False)
class LinearModel:
    theta: np.ndarray
    theta_max: float = 1e3

    def __post_init__(self):
        if self.theta_max <= 0:
            raise ValueError("theta_max must be positive")

    @classmethod
    def zeros(cls, dim: int, theta_max: float = 1e3) -> "LinearModel":
        return cls(np.zeros(dim), theta_max)

    def predict(self, features):
        return np.asarray(features) @ self.theta


def project_ball(theta, theta_max: float):
    theta = np.asarray(theta, dtype=float)
    nrm = np.linalg.norm(theta)
    if nrm <= theta_max:
        return theta
    return theta * (theta_max / nrm)


def _update(theta, phi_sa, target, alpha, theta_max):
    resid = phi_sa @ theta - target
    theta = theta - (2.0 * alpha * resid) * phi_sa
    nrm = np.sqrt(theta @ theta)
    if nrm > theta_max:
        theta = theta * (theta_max / nrm)
    return theta


def sgd_step(model: LinearModel, phi_sa, target: float, alpha: float) -> LinearModel:
    if not np.isfinite(target):
        raise ValueError(f"non-finite regression target {target}")
    if alpha <= 0:
        raise ValueError("step size must be positive")
    theta = _update(model.theta, np.asarray(phi_sa, dtype=float), float(target), alpha, model.theta_max)
    return LinearModel(theta, model.theta_max)


def sgd_schedule(n: int, kappa0: float, multiplier: float = 1.0) -> float:
    """``multiplier / (2 kappa0 (n + 2))``."""
    if n < 0 or kappa0 <= 0:
        raise ValueError("need n >= 0 and kappa0 > 0")
    return multiplier / (2.0 * kappa0 * (n + 2))


def weighted_average(iterates):
    """``2/(N(N+1)) * sum_n (n+1) theta_n`` over a sequence of N iterates."""
    it = np.asarray(iterates, dtype=float)
    if it.ndim == 0 or len(it) == 0:
        raise ValueError("need at least one iterate")
    N = len(it)
    w = np.arange(1, N + 1, dtype=float) * (2.0 / (N * (N + 1)))
    return np.tensordot(w, it, axes=1)


def projected_sgd(features, targets, kappa0: float = 1.0, theta_max: float = 1e3, theta0=None,
                  multiplier: float = 1.0):
    """Run one projected SGD pass over ``(features[n], targets[n])`` and return the weighted average.

    The n-th produced iterate receives weight ``n + 1``, accumulated on the fly.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite regression target")
    N = len(targets)
    if N < 1:
        raise ValueError("need at least one sample")
    theta = np.zeros(features.shape[1]) if theta0 is None else project_ball(theta0, theta_max).copy()
    acc = np.zeros_like(theta)
    for n in range(N):
        alpha = multiplier / (2.0 * kappa0 * (n + 2))
        theta = _update(theta, features[n], targets[n], alpha, theta_max)
        acc += (n + 1) * theta
    return acc * (2.0 / (N * (N + 1)))
