"""Per-iteration run records and convergence metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

COLUMNS = ("t", "seed", "v_r", "v_g", "lambda", "phi", "fallbacks", "cap_hits")


class Row(NamedTuple):
    t: int
    seed: int
    v_r: float
    v_g: float
    lam: float
    phi: float
    fallbacks: int
    cap_hits: int


class DriverAbort(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None, seed: int | None = None):
        self.iteration = iteration
        self.seed = seed
        where = []
        if seed is not None:
            where.append(f"seed={seed}")
        if iteration is not None:
            where.append(f"t={iteration}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass
class RunRecord:
    """One optimizer run: ``rows[t]`` describes iterate ``t`` before its update."""

    seed: int
    rows: list = field(default_factory=list)
    final_policy: object = None
    final_lambda: float = float("nan")
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        attr = "lam" if name == "lambda" else name
        return np.array([getattr(r, attr) for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)


def potential_phi(policy, lam: float, ref_policy, ref_lam: float, eta: float, tau: float, probe_states) -> float:
    """``(1/2) E||pi*(s) - pi_t(s)||^2 + (lam* - lam_t)^2 / (2 (1 + eta tau))`` over probe states."""
    if ref_policy is None or ref_lam is None:
        raise ValueError("potential needs a reference saddle pair")
    s = np.atleast_2d(np.asarray(probe_states, dtype=float))
    diff = ref_policy(s) - policy(s)
    primal = 0.5 * float(np.mean(np.sum(diff * diff, axis=-1)))
    return primal + (ref_lam - lam) ** 2 / (2.0 * (1.0 + eta * tau))


def window_means(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x) // window
    return x[: n * window].reshape(n, window).mean(axis=1)


def settle_time(v_g, tol: float) -> int:
    """First index after which ``v_g >= -tol`` holds for every later iterate; ``len(v_g)`` if never."""
    v = np.asarray(v_g, dtype=float)
    bad = np.flatnonzero(v < -tol)
    if bad.size == 0:
        return 0
    return int(bad[-1] + 1)


def head_tail_std(x, frac: float = 0.1) -> tuple:
    x = np.asarray(x, dtype=float)
    m = max(2, int(round(frac * len(x))))
    return float(np.std(x[:m])), float(np.std(x[-m:]))


def plateau_onset(smoothed, rel: float = 0.05) -> int:
    """First window whose level is within ``rel`` (relative) of the final plateau level."""
    m = np.asarray(smoothed, dtype=float)
    tail = m[-max(1, len(m) // 5):]
    level = float(np.mean(tail))
    band = rel * abs(level) + 1e-12
    within = np.flatnonzero(np.abs(m - level) <= band)
    return int(within[0]) if within.size else len(m)


def nonincreasing_until_plateau(series, window: int = 50, max_rise: float = 0.05) -> tuple:
    """Check that window-smoothed ``series`` never rises by more than ``max_rise`` before its plateau.

    Returns ``(ok, onset, worst_rise)`` where ``worst_rise`` is the largest relative
    window-to-window increase before the onset.
    """
    m = window_means(series, window)
    onset = plateau_onset(m)
    worst = 0.0
    for i in range(min(onset, len(m) - 1)):
        if m[i] > 0:
            worst = max(worst, (m[i + 1] - m[i]) / m[i])
    return worst <= max_rise, onset, worst
