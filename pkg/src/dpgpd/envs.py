"""Stochastic benchmark environments and the reward/utility catalog.

Both steppers accept a single state ``(d,)`` or a batch ``(n, d)``.  States
are clamped elementwise to ``[-state_bound, state_bound]`` after each step and
clamp events are counted on the environment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BlowUpError(FloatingPointError):
    """Raised when a step produces a non-finite state."""


def _noise_factor(cov: np.ndarray) -> np.ndarray:
    # eigen square root tolerates singular (PSD) covariances
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.min() < -1e-12 * max(1.0, abs(w).max()):
        raise ValueError("noise covariance must be positive semidefinite")
    return v * np.sqrt(np.clip(w, 0.0, None))


def _check_dims(s, a, ds, da):
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    if s.shape[-1] != ds or a.shape[-1] != da:
        raise ValueError(f"expected state dim {ds} and action dim {da}, got {s.shape} and {a.shape}")
    if s.ndim != a.ndim or (s.ndim == 2 and s.shape[0] != a.shape[0]):
        raise ValueError(f"state/action batch shapes disagree: {s.shape} vs {a.shape}")
    return s, a


class _Env:
    state_dim: int
    action_dim: int

    def __init__(self, rng=None, state_bound: float = 100.0):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state_bound = float(state_bound)
        self.clamp_events = 0

    def _noise(self, shape_prefix) -> np.ndarray:
        raise NotImplementedError

    def _clamp(self, s):
        out = np.clip(s, -self.state_bound, self.state_bound)
        self.clamp_events += int(np.count_nonzero(out != s))
        return out

    def mean_step(self, s, a):
        raise NotImplementedError

    def step(self, s, a):
        s, a = _check_dims(s, a, self.state_dim, self.action_dim)
        nxt = self.mean_step(s, a) + self._noise(s.shape[:-1])
        if not np.all(np.isfinite(nxt)):
            raise BlowUpError("non-finite state encountered")
        return self._clamp(nxt)

    def reseed(self, rng):
        self.rng = rng
        self.clamp_events = 0
        return self


class LinearGaussianEnv(_Env):
    """``s' = B0 s + B1 a + w`` with ``w ~ N(0, noise_cov)``."""

    def __init__(self, B0, B1, noise_cov, rng=None, state_bound: float = 100.0):
        super().__init__(rng, state_bound)
        self.B0 = np.asarray(B0, dtype=float)
        self.B1 = np.asarray(B1, dtype=float)
        self.noise_cov = np.asarray(noise_cov, dtype=float)
        self.state_dim, self.action_dim = self.B1.shape
        if self.B0.shape != (self.state_dim, self.state_dim):
            raise ValueError("B0 must be square and match B1's row count")
        if self.noise_cov.shape != self.B0.shape:
            raise ValueError("noise covariance must be d_s x d_s")
        self._factor = _noise_factor(self.noise_cov)
        self._noiseless = not np.any(self._factor)

    def _noise(self, prefix):
        if self._noiseless:
            return 0.0
        z = self.rng.standard_normal(tuple(prefix) + (self.state_dim,))
        return z @ self._factor.T

    def mean_step(self, s, a):
        return s @ self.B0.T + a @ self.B1.T


class BurgersEnv(_Env):
    """Forward-Euler, central-difference viscous Burgers with zero-Dirichlet ghosts.

    ``s' = B0 s + B1 a + B2 (s*s) + w`` with ``w ~ N(0, noise_scale^2 I)``.
    Nodes are cell centres ``x_i = (i + 1/2) / d``.
    """

    def __init__(self, grid_size: int, dt: float, viscosity: float, noise_scale: float = 0.01,
                 rng=None, state_bound: float = 100.0):
        super().__init__(rng, state_bound)
        d = int(grid_size)
        self.grid_size = d
        self.dt = float(dt)
        self.viscosity = float(viscosity)
        self.dx = 1.0 / d
        self.noise_scale = float(noise_scale)
        self.state_dim = self.action_dim = d
        self.nodes = (np.arange(d) + 0.5) * self.dx

        diff = self.viscosity * self.dt / self.dx ** 2
        adv = self.dt / (4.0 * self.dx)
        off = np.eye(d, k=1)
        sub = np.eye(d, k=-1)
        self.B0 = (1.0 - 2.0 * diff) * np.eye(d) + diff * (off + sub)
        self.B1 = self.dt * np.eye(d)
        self.B2 = adv * sub - adv * off

    def _noise(self, prefix):
        if self.noise_scale == 0.0:
            return 0.0
        return self.noise_scale * self.rng.standard_normal(tuple(prefix) + (self.state_dim,))

    def mean_step(self, s, a):
        return s @ self.B0.T + a @ self.B1.T + (s * s) @ self.B2.T


def nav_build(Ts: float = 0.05, noise_cov=None, rng=None, state_bound: float = 100.0) -> LinearGaussianEnv:
    """Planar double integrator: state (p_x, p_y, v_x, v_y), action (acc_x, acc_y)."""
    if Ts <= 0:
        raise ValueError(f"sampling period must be positive, got {Ts}")
    B0 = np.eye(4)
    B0[0, 2] = B0[1, 3] = Ts
    B1 = np.array([[Ts ** 2 / 2, 0.0], [0.0, Ts ** 2 / 2], [Ts, 0.0], [0.0, Ts]])
    if noise_cov is None:
        noise_cov = NAV_NOISE_COV
    return LinearGaussianEnv(B0, B1, noise_cov, rng=rng, state_bound=state_bound)


def nav_step(env: LinearGaussianEnv, s, a):
    return env.step(s, a)


def burgers_build(d: int = 10, dt: float = 0.01, viscosity: float = 0.1, noise_scale: float = 0.01,
                  rng=None, state_bound: float = 100.0) -> BurgersEnv:
    if d < 3:
        raise ValueError(f"Burgers grid needs at least 3 nodes, got {d}")
    if dt <= 0:
        raise ValueError("time step must be positive")
    if viscosity < 0:
        raise ValueError("viscosity must be nonnegative")
    return BurgersEnv(d, dt, viscosity, noise_scale, rng=rng, state_bound=state_bound)


def burgers_step(env: BurgersEnv, s, a):
    return env.step(s, a)


# ---------------------------------------------------------------------------
# reward / utility catalog

@dataclass(frozen=True, eq=False)
class QuadraticReward:
    """``s^T G s + a^T R a + const``."""

    G: np.ndarray
    R: np.ndarray
    const: float = 0.0
    variant = "quadratic"

    def __call__(self, s, a):
        s, a = _check_dims(s, a, self.G.shape[0], self.R.shape[0])
        return (np.einsum("...i,ij,...j->...", s, self.G, s)
                + np.einsum("...i,ij,...j->...", a, self.R, a) + self.const)


@dataclass(frozen=True, eq=False)
class AbsoluteReward:
    """Signed weighted L1: ``sum_i g_i |s_i| + sum_j m_j |a_j|`` (negative weights penalize)."""

    g: np.ndarray
    m: np.ndarray
    variant = "absolute"

    def __call__(self, s, a):
        s, a = _check_dims(s, a, len(self.g), len(self.m))
        return np.abs(s) @ self.g + np.abs(a) @ self.m


@dataclass(frozen=True, eq=False)
class ZoneReward:
    """0 inside the positive position orthant (p_x >= 0 and p_y >= 0), ``penalty`` outside."""

    penalty: float = -100.0
    state_dim: int = 4
    action_dim: int = 2
    variant = "zone"

    def __call__(self, s, a):
        s, a = _check_dims(s, a, self.state_dim, self.action_dim)
        inside = (s[..., 0] >= 0) & (s[..., 1] >= 0)
        return np.where(inside, 0.0, self.penalty)


@dataclass(frozen=True, eq=False)
class FluidStateReward:
    """``-||s||^2``."""

    dim: int
    variant = "fluid_state"

    def __call__(self, s, a):
        s, a = _check_dims(s, a, self.dim, self.dim)
        return -np.sum(s * s, axis=-1)

    def as_quadratic(self) -> QuadraticReward:
        return QuadraticReward(-np.eye(self.dim), np.zeros((self.dim, self.dim)))


@dataclass(frozen=True, eq=False)
class FluidActionL1:
    """``-||a||_1``."""

    dim: int
    variant = "fluid_action_l1"

    def __call__(self, s, a):
        s, a = _check_dims(s, a, self.dim, self.dim)
        return -np.sum(np.abs(a), axis=-1)


def eval_reward(spec, s, a):
    return spec(s, a)


NAV_NOISE_COV = np.diag([1.0, 1.0, 0.1, 0.1])
NAV_G1 = np.diag([-1.0, -1.0, -0.1, -0.1])
NAV_G2 = np.diag([-0.1, -0.1, -1.0, -1.0])
NAV_R1 = np.diag([-0.1, -0.1])
NAV_R2 = np.diag([-0.1, -0.1])
NAV_ABS_G1 = np.array([-1.0, -1.0, -0.001, -0.001])
NAV_ABS_G2 = np.array([-0.001, -0.001, -1.0, -1.0])
NAV_ABS_M1 = np.array([-0.01, -0.01])
NAV_ABS_M2 = np.array([-0.01, -0.01])
ZONE_PENALTY = -100.0


def nav_rewards(variant: str):
    """(reward, utility) pair of a navigation task variant."""
    if variant == "quadratic":
        return QuadraticReward(NAV_G1, NAV_R1), QuadraticReward(NAV_G2, NAV_R2)
    if variant == "absolute":
        return AbsoluteReward(NAV_ABS_G1, NAV_ABS_M1), AbsoluteReward(NAV_ABS_G2, NAV_ABS_M2)
    if variant == "zone":
        return QuadraticReward(NAV_G1, NAV_R1), ZoneReward(ZONE_PENALTY)
    raise KeyError(f"unknown navigation variant {variant!r}")
