"""Geometric-horizon Monte-Carlo estimators of V and Q.

A horizon ``T ~ Geom(1 - gamma)`` on ``{1, 2, ...}`` and the undiscounted sum
of the first ``T`` rewards gives an unbiased estimate of the discounted value,
since ``P(T > t) = gamma^t``.  Estimates are returned on the raw (unnormalized)
scale unless ``normalized_return`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

Stream = Union[str, Callable]


@dataclass(frozen=True)
class RolloutConfig:
    gamma: float
    max_horizon_cap: int = 10_000
    reward_selector: tuple = ("r",)
    normalized_return: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        if self.max_horizon_cap < 1:
            raise ValueError("horizon cap must be at least 1")


def sample_horizon(gamma: float, rng: np.random.Generator, cap: int = 10_000, size=None):
    """Draw ``T`` with ``P(T = k) = (1 - gamma) gamma^(k-1)``, truncated at ``cap``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma}")
    T = rng.geometric(1.0 - gamma, size=size)
    return np.minimum(T, cap) if size is not None else int(min(T, cap))


def mean_and_se(samples) -> tuple:
    """Mean and standard error, reduced with compensated summation."""
    x = np.asarray(samples, dtype=float).ravel()
    n = len(x)
    mean = math.fsum(x) / n
    if n < 2:
        return mean, float("nan")
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


class RolloutEstimator:
    """Batched unbiased estimators bound to one instance and one random stream.

    The environment's own generator supplies transition noise; ``rng`` supplies
    horizons and initial states.  ``cap_hits`` counts truncated horizons.
    """

    def __init__(self, instance, config: RolloutConfig, rng: np.random.Generator):
        self.instance = instance
        self.config = config
        self.rng = rng
        self.cap_hits = 0
        self.draws = 0

    def _resolve(self, streams: Sequence[Stream], lam: float, tau: float):
        out = []
        for st in streams:
            out.append(self.instance.stream(st, lam, tau) if isinstance(st, str) else st)
        return out

    def horizons(self, n: int) -> np.ndarray:
        cap = self.config.max_horizon_cap
        T = self.rng.geometric(1.0 - self.config.gamma, size=n)
        hits = int(np.count_nonzero(T > cap))
        self.cap_hits += hits
        self.draws += n
        return np.minimum(T, cap)

    def _run(self, policy, s0, a0, streams):
        env = self.instance.env
        n = len(s0)
        T = self.horizons(n)
        sums = np.zeros((n, len(streams)))
        idx = np.arange(n)
        s = s0
        t = 0
        while idx.size:
            a = a0 if (t == 0 and a0 is not None) else policy(s)
            for j, f in enumerate(streams):
                sums[idx, j] += f(s, a)
            keep = T[idx] > t + 1
            if not keep.any():
                break
            s = env.step(s[keep], a[keep])
            idx = idx[keep]
            t += 1
        if self.config.normalized_return:
            sums *= 1.0 - self.config.gamma
        return sums

    def v(self, policy, n: int = 1, streams: Sequence[Stream] | None = None,
          lam: float = 0.0, tau: float = 0.0, initial_states=None) -> np.ndarray:
        """``n`` independent value estimates, shape ``(n, n_streams)``."""
        fs = self._resolve(streams or self.config.reward_selector, lam, tau)
        if initial_states is None:
            s0 = self.instance.initial.sample(self.rng, n)
        else:
            s0 = np.atleast_2d(np.asarray(initial_states, dtype=float))
        return self._run(policy, s0, None, fs)

    def q(self, policy, s, a, streams: Sequence[Stream] | None = None,
          lam: float = 0.0, tau: float = 0.0) -> np.ndarray:
        """One estimate per row of ``(s, a)``, shape ``(n, n_streams)``."""
        fs = self._resolve(streams or self.config.reward_selector, lam, tau)
        s = np.atleast_2d(np.asarray(s, dtype=float))
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if len(s) != len(a):
            raise ValueError("state and action batches differ in length")
        return self._run(policy, s, a, fs)


def estimate_v(instance, policy, config: RolloutConfig, rng: np.random.Generator, n: int = 1,
               lam: float = 0.0, tau: float = 0.0) -> np.ndarray:
    """Rollout value estimates of the first selected stream, shape ``(n,)``."""
    return RolloutEstimator(instance, config, rng).v(policy, n, lam=lam, tau=tau)[:, 0]


def estimate_q(instance, policy, s, a, config: RolloutConfig, rng: np.random.Generator,
               lam: float = 0.0, tau: float = 0.0) -> np.ndarray:
    """Rollout Q estimates (first transition from ``(s, a)``), shape ``(n,)``."""
    return RolloutEstimator(instance, config, rng).q(policy, s, a, lam=lam, tau=tau)[:, 0]


def visitation_states(instance, policy, rng: np.random.Generator, n: int, cap: int = 10_000):
    """States drawn from the discounted visitation distribution of ``policy`` from the initial distribution.

    Each draw rolls ``T - 1`` transitions with ``T ~ Geom(1 - gamma)``.
    """
    env = instance.env
    T = np.minimum(rng.geometric(1.0 - instance.gamma, size=n), cap)
    s = instance.initial.sample(rng, n)
    out = s.copy()
    idx = np.arange(n)
    t = 1
    while True:
        live = T[idx] > t
        if not live.any():
            break
        idx = idx[live]
        s = s[live]
        s = env.step(s, policy(s))
        out[idx] = s
        t += 1
    return out
