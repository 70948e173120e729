"""Brute-force reference computations used by the tests and the ``oracle`` CLI.

Each routine reaches its answer by a different path from the library code it
checks: moment propagation instead of Lyapunov solves, grid search instead of
closed-form maximizers, an explicit per-node loop instead of stencil matrices,
and a Riccati/bisection saddle instead of primal-dual iteration.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg


def truncation_length(gamma: float, rmax: float, tol: float = 1e-6) -> int:
    """Smallest ``T`` with ``gamma^T rmax / (1 - gamma) < tol``."""
    if rmax <= 0:
        return 1
    return max(1, int(math.ceil(math.log(tol * (1.0 - gamma) / rmax) / math.log(gamma))) + 1)


def truncated_moment_value(B0, B1, noise_cov, K, k, G, R, gamma: float, mean0, second0,
                           const: float = 0.0, horizon: int | None = None, tol: float = 1e-12) -> float:
    """``E sum_t gamma^t r(s_t, a_t)`` for ``a = K s + k`` by propagating the first two moments.

    Stops after ``horizon`` steps, or once the discounted per-step term falls below ``tol``
    for 50 consecutive steps.
    """
    B0, B1, Sig = (np.asarray(x, dtype=float) for x in (B0, B1, noise_cov))
    K, k, G, R = (np.asarray(x, dtype=float) for x in (K, k, G, R))
    mu = np.asarray(mean0, dtype=float).copy()
    S = np.asarray(second0, dtype=float).copy()
    M = B0 + B1 @ K
    m = B1 @ k
    Qs = G + K.T @ R @ K
    lin = 2.0 * K.T @ R @ k
    c0 = k @ R @ k + const
    total, disc, quiet, t = 0.0, 1.0, 0, 0
    while True:
        term = np.sum(Qs * S) + lin @ mu + c0
        total += disc * term
        t += 1
        if horizon is not None and t >= horizon:
            break
        if horizon is None:
            quiet = quiet + 1 if abs(disc * term) < tol else 0
            if quiet >= 50 or t > 10_000_000:
                break
        S = M @ S @ M.T + M @ np.outer(mu, m) + np.outer(m, mu) @ M.T + np.outer(m, m) + Sig
        mu = M @ mu + m
        disc *= gamma
    return float(total)


def point_value(env, policy, G, R, gamma, s, const=0.0, **kw) -> float:
    s = np.asarray(s, dtype=float)
    return truncated_moment_value(env.B0, env.B1, env.noise_cov, policy.K, policy.k, G, R, gamma,
                                  s, np.outer(s, s), const, **kw)


def point_q(env, policy, G, R, gamma, s, a, const=0.0, **kw) -> float:
    """Q by one explicit step then the moment recursion from the next-state distribution."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    r0 = s @ G @ s + a @ R @ a + const
    mu = env.B0 @ s + env.B1 @ a
    rest = truncated_moment_value(env.B0, env.B1, env.noise_cov, policy.K, policy.k, G, R, gamma,
                                  mu, np.outer(mu, mu) + env.noise_cov, const, **kw)
    return float(r0 + gamma * rest)


def _zoom(f, center, half_width, pitch, lo, hi, shrink=10, span=12):
    """Iterated grid search: each pass lays a grid of ``2 span + 1`` points per axis."""
    center = np.asarray(center, dtype=float)
    d = len(center)
    step = half_width / span
    while True:
        axes = [np.clip(c + step * np.arange(-span, span + 1), l, h) for c, l, h in zip(center, lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = f(grid)
        center = grid[int(np.argmax(vals))]
        if step <= pitch * (1 + 1e-9):
            return center
        step = max(step / shrink, pitch)


def box_grid_argmax(f, dim: int, bound: float, pitch: float = 1e-3, coarse_points: int = 401):
    """Maximize ``f`` (vectorized over rows) on ``[-bound, bound]^dim`` by multi-resolution grid search.

    The first grid covers the whole box; refinements zoom geometrically around
    the incumbent down to ``pitch``.
    """
    lo, hi = -bound * np.ones(dim), bound * np.ones(dim)
    if dim == 1:
        axes = [np.linspace(-bound, bound, coarse_points)]
    else:
        n = max(21, int(round(coarse_points ** (2.0 / dim))))
        axes = [np.linspace(-bound, bound, n)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    best = grid[int(np.argmax(f(grid)))]
    h = 2 * bound / (len(axes[0]) - 1)
    return _zoom(f, best, 2 * h, pitch, lo, hi)


def dual_grid_argmin(lam_t: float, v_g: float, tau: float, eta: float, lam_max: float,
                     pitch: float = 1e-6) -> float:
    """Grid argmin over ``[0, lam_max]`` of ``l (v_g + tau lam_t) + (l - lam_t)^2 / (2 eta)``."""
    obj = lambda l: l[:, 0] * (v_g + tau * lam_t) + (l[:, 0] - lam_t) ** 2 / (2.0 * eta)
    grid = np.linspace(0.0, lam_max, 10_001)[:, None]
    best = grid[int(np.argmin(obj(grid)))]
    h = lam_max / 10_000
    return float(_zoom(lambda l: -obj(l), best, 2 * h, pitch, [0.0], [lam_max])[0])


def burgers_loop_step(s, a, dt: float, viscosity: float, noise=None):
    """One explicit step evaluated node by node with zero ghost values at both walls."""
    s = list(map(float, s))
    d = len(s)
    dx = 1.0 / d
    out = []
    for i in range(d):
        left = s[i - 1] if i > 0 else 0.0
        right = s[i + 1] if i < d - 1 else 0.0
        diffusion = viscosity * (right - 2.0 * s[i] + left) / dx ** 2
        advection = 0.5 * (right ** 2 - left ** 2) / (2.0 * dx)
        w = 0.0 if noise is None else float(noise[i])
        out.append(s[i] + dt * (diffusion - advection + float(a[i])) + w)
    return np.array(out)


def riccati_gain(B0, B1, G, R, gamma: float):
    """Gain of the policy maximizing ``E sum gamma^t (s^T G s + a^T R a)`` (G <= 0, R < 0)."""
    B0, B1 = np.asarray(B0, dtype=float), np.asarray(B1, dtype=float)
    sg = math.sqrt(gamma)
    X = scipy.linalg.solve_discrete_are(sg * B0, sg * B1, -np.asarray(G, dtype=float),
                                        -np.asarray(R, dtype=float))
    return -np.linalg.solve(-np.asarray(R) + gamma * B1.T @ X @ B1, gamma * B1.T @ X @ B0)


def regularized_saddle(instance, tau: float, tol: float = 1e-12):
    """``(K*, lam*)`` of the regularized Lagrangian of a quadratic instance.

    For fixed ``lam`` the best response is an LQR gain; ``lam*`` is the root of
    ``V_g(pi_lam) + tau lam`` on ``[0, lambda_max]``, found by bisection.
    """
    env, gamma = instance.env, instance.gamma
    r, u = instance.reward, instance.utility
    da = instance.action_dim
    rho = instance.initial
    g_const = u.const - (1.0 - gamma) * instance.b

    def best(lam):
        return riccati_gain(env.B0, env.B1, r.G + lam * u.G, r.R + lam * u.R - 0.5 * tau * np.eye(da), gamma)

    def slope(lam):
        K = best(lam)
        vg = truncated_moment_value(env.B0, env.B1, env.noise_cov, K, np.zeros(da), u.G, u.R, gamma,
                                    rho.mean(), rho.second_moment(), g_const)
        return vg + tau * lam

    lo, hi = 0.0, instance.lambda_max
    if slope(lo) >= 0:
        return best(0.0), 0.0
    if slope(hi) <= 0:
        return best(hi), hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if slope(mid) < 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    return best(lam), lam


# -- CLI suites ------------------------------------------------------------------

def _suite_lyapunov():
    # scalar b0=0.5, b1=0, K=k=0, G=-1, R=0, noiseless, gamma=0.5, value at s=1 is P
    P = truncated_moment_value([[0.5]], [[0.0]], [[0.0]], [[0.0]], [0.0], [[-1.0]], [[0.0]], 0.5,
                               [1.0], [[1.0]])
    return {"scalar_P": P, "closed_form": -8.0 / 7.0}


def _suite_geometric():
    return {"constant_reward_gamma_0.5": sum(0.5 ** t for t in range(200)), "closed_form": 2.0}


def _suite_dual():
    return {"stationary": dual_grid_argmin(0.3, -0.003, 0.01, 0.1, 10.0),
            "interior": dual_grid_argmin(0.5, -2.0, 0.01, 0.1, 10.0),
            "lower_clip": dual_grid_argmin(0.1, 5.0, 0.0, 1.0, 10.0)}


def _suite_primal():
    # maximize 2sa - 1.5a^2 at s = 1 over [-10, 10]
    a = box_grid_argmax(lambda x: 2.0 * x[:, 0] - 1.5 * x[:, 0] ** 2, 1, 10.0)
    return {"scalar_argmax_s1": float(a[0]), "closed_form": 2.0 / 3.0}


def _suite_burgers():
    d = 10
    x = (np.arange(d) + 0.5) / d
    s = np.sin(np.pi * x)
    for _ in range(100):
        s = burgers_loop_step(s, np.zeros(d), 0.01, 0.0)
    return {f"s100[{i}]": float(v) for i, v in enumerate(s)}


def _suite_saddle():
    from .harness import build_instance, preset

    cfg = preset("nav-quadratic")
    inst = build_instance(cfg)
    K, lam = regularized_saddle(inst, cfg.tau)
    out = {"lambda_star": lam}
    out.update({f"K[{i},{j}]": float(K[i, j]) for i in range(K.shape[0]) for j in range(K.shape[1])})
    return out


SUITES = {"lyapunov": _suite_lyapunov, "geometric": _suite_geometric, "dual": _suite_dual,
          "primal": _suite_primal, "burgers": _suite_burgers, "saddle": _suite_saddle}


def run_suite(name: str) -> dict:
    if name == "all":
        return {f"{k}.{kk}": vv for k, fn in SUITES.items() for kk, vv in fn().items()}
    if name not in SUITES:
        raise KeyError(f"unknown oracle suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name]()
