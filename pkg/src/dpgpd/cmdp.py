"""Problem definition types and the scalar algebra of the regularized Lagrangian.

Conventions used throughout the package:

* ``g = u - (1 - gamma) * b`` is the translated utility, so ``V_g >= 0`` is
  the constraint ``V_u >= b``.
* The composite reward is ``r + lam * g - (tau / 2) * ||a||^2``; the action
  regularizer is a penalty on large actions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


def translate_utility(u_value, b: float, gamma: float):
    """Shift a utility so that ``V_u >= b`` becomes ``V_g >= 0``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma}")
    return u_value - (1.0 - gamma) * b


def regularized_reward(r_value, g_value, lam: float, tau: float, a):
    """Per-step reward ``r + lam*g - (tau/2)*||a||^2``; broadcasts over a batch of actions."""
    a = np.asarray(a, dtype=float)
    return r_value + lam * g_value - 0.5 * tau * np.sum(a * a, axis=-1)


def lambda_cap(gamma: float, xi: float) -> float:
    """Upper end of the dual interval, ``1 / ((1 - gamma) * xi)``."""
    if xi <= 0:
        raise ValueError(f"slack xi must be positive (infeasible instance signal), got {xi}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma}")
    return 1.0 / ((1.0 - gamma) * xi)


@dataclass(frozen=True)
class RegularizationParams:
    tau: float
    eta: float
    lambda_max: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if self.eta <= 0:
            raise ValueError(f"step size eta must be positive, got {self.eta}")
        if self.lambda_max <= 0:
            raise ValueError(f"lambda_max must be positive, got {self.lambda_max}")

    @classmethod
    def from_instance(cls, instance: "CmdpInstance", tau: float, eta: float) -> "RegularizationParams":
        return cls(tau=tau, eta=eta, lambda_max=lambda_cap(instance.gamma, instance.slack))

    @property
    def penalty_coef(self) -> float:
        """Curvature ``tau/2 + 1/(2 eta)`` of the approximate primal subproblem."""
        return 0.5 * self.tau + 0.5 / self.eta


class InitialDistribution:
    """Initial-state distribution with the first two moments exposed for closed-form averaging."""

    dim: int

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def second_moment(self) -> np.ndarray:
        """``E[s s^T]``."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GaussianInitial(InitialDistribution):
    """``N(mean, cov)``; a zero covariance gives a point mass."""

    loc: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.loc)

    def sample(self, rng, n):
        w, v = np.linalg.eigh(self.cov)
        z = rng.standard_normal((n, self.dim))
        return self.loc + z @ (v * np.sqrt(np.clip(w, 0.0, None))).T

    def mean(self):
        return np.asarray(self.loc, dtype=float)

    def second_moment(self):
        m = self.mean()
        return self.cov + np.outer(m, m)


@dataclass(frozen=True)
class NavInitial(InitialDistribution):
    """Position uniform on ``[-w, w]^2``, velocity ``N(0, vel_var * I)``."""

    position_half_width: float = 5.0
    velocity_var: float = 0.1
    dim: int = 4

    def sample(self, rng, n):
        w = self.position_half_width
        pos = rng.uniform(-w, w, size=(n, 2))
        vel = rng.standard_normal((n, 2)) * np.sqrt(self.velocity_var)
        return np.hstack([pos, vel])

    def mean(self):
        return np.zeros(4)

    def second_moment(self):
        w = self.position_half_width
        return np.diag([w * w / 3.0, w * w / 3.0, self.velocity_var, self.velocity_var])


@dataclass(frozen=True)
class BumpInitial(InitialDistribution):
    """``c * sin(pi x)`` on the grid nodes with ``c ~ U[lo, hi]``."""

    nodes: tuple
    lo: float = 0.5
    hi: float = 1.5

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.nodes)

    @property
    def profile(self) -> np.ndarray:
        return np.sin(np.pi * np.asarray(self.nodes))

    def sample(self, rng, n):
        c = rng.uniform(self.lo, self.hi, size=(n, 1))
        return c * self.profile[None, :]

    def mean(self):
        return 0.5 * (self.lo + self.hi) * self.profile

    def second_moment(self):
        ec2 = (self.hi ** 3 - self.lo ** 3) / (3.0 * (self.hi - self.lo))
        v = self.profile
        return ec2 * np.outer(v, v)


@dataclass(frozen=True)
class CmdpInstance:
    """The tuple (S, A, p, r, u, b, gamma, rho) plus the box bounds and Slater slack."""

    env: object
    reward: Callable
    utility: Callable
    b: float
    gamma: float
    action_bound: float
    initial: InitialDistribution
    state_bound: float = 100.0
    slack: float = 1.0
    name: str = field(default="cmdp", compare=False)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        if self.action_bound <= 0:
            raise ValueError("action bound must be positive")
        if self.slack <= 0:
            raise ValueError("slack xi must be positive")

    @property
    def state_dim(self) -> int:
        return self.env.state_dim

    @property
    def action_dim(self) -> int:
        return self.env.action_dim

    @property
    def lambda_max(self) -> float:
        return lambda_cap(self.gamma, self.slack)

    def g(self, s, a):
        return translate_utility(self.utility(s, a), self.b, self.gamma)

    def stream(self, name: str, lam: float = 0.0, tau: float = 0.0) -> Callable:
        """Per-step scalar stream by name: ``r``, ``u``, ``g``, ``h`` (= -||a||^2) or ``lagrangian``."""
        if name == "r":
            return self.reward
        if name == "u":
            return self.utility
        if name == "g":
            return self.g
        if name == "h":
            return lambda s, a: -np.sum(np.asarray(a) ** 2, axis=-1)
        if name == "lagrangian":
            return lambda s, a: regularized_reward(self.reward(s, a), self.g(s, a), lam, tau, a)
        raise KeyError(f"unknown reward stream {name!r}")

    def with_env(self, env) -> "CmdpInstance":
        return replace(self, env=env)
