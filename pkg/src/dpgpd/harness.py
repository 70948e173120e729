"""Run configuration, presets, multi-seed execution and CSV persistence."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from .cmdp import BumpInitial, CmdpInstance, GaussianInitial, NavInitial, RegularizationParams
from .envs import (FluidActionL1, FluidStateReward, LinearGaussianEnv, QuadraticReward, burgers_build,
                   nav_build, nav_rewards)
from .lq import AffinePolicy
from .pgpd import SolverOptions, run_adpgpd, run_dpgpd_exact, run_pgdual
from .records import COLUMNS, DriverAbort, RunRecord
from .rollout import visitation_states

log = logging.getLogger(__name__)

DRIVERS = ("dpgpd_exact", "adpgpd_model", "adpgpd_sample", "pgdual")
WORKERS_ENV = "DPGPD_WORKERS"


class ConfigError(ValueError):
    """Invalid or unknown configuration entries."""


@dataclass(frozen=True)
class RunConfig:
    """Flat experiment description; together with a seed it fixes a run bit-for-bit."""

    experiment: str = "run"
    driver: str = "dpgpd_exact"
    env: str = "nav"                 # "nav" or "burgers"
    variant: str = "quadratic"       # nav: quadratic | absolute | zone; burgers: fluid
    gamma: float = 0.9
    b: float = -90.0
    tau: float = 0.01
    eta: float = 0.01
    T: int = 2000
    N: int = 200                     # regression samples per iteration
    M: int = 10                      # dual rollouts per iteration
    seeds: tuple = tuple(range(10))
    xi: float = 1.0                  # Slater slack
    action_bound: float = 20.0
    state_bound: float = 100.0       # diagnostic clamp
    sample_state_bound: float = 5.0  # half-width of the state box of nu
    # navigation
    Ts: float = 0.05                 # seconds
    position_half_width: float = 5.0
    velocity_var: float = 0.1
    # burgers
    grid_size: int = 10
    dt: float = 0.01                 # seconds
    viscosity: float = 0.1
    noise_scale: float = 0.01
    bump_lo: float = 0.5
    bump_hi: float = 1.5
    # estimator / regression
    normalized_return: bool = False
    augment_bias: bool = True
    max_horizon: int = 10_000
    kappa0: float = 1.0
    step_multiplier: float = 1.0
    theta_max: float = 1e8
    sgd_init: str = "proximal"
    model_fit: str = "exact"
    # potential-function reference
    track_phi: bool = False
    ref_eta: float = 1e-3
    ref_tau: float = 1e-4
    ref_T: int = 20_000
    n_probes: int = 256
    output_dir: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self):
        if self.driver not in DRIVERS:
            raise ConfigError(f"unknown driver {self.driver!r}; choose from {DRIVERS}")
        if self.env not in ("nav", "burgers"):
            raise ConfigError(f"unknown env {self.env!r}")
        if self.env == "nav" and self.variant not in ("quadratic", "absolute", "zone"):
            raise ConfigError(f"unknown navigation variant {self.variant!r}")
        if self.env == "burgers" and self.variant != "fluid":
            raise ConfigError("burgers supports only the 'fluid' variant")
        closed_form = self.env == "nav" and self.variant == "quadratic"
        if self.driver in ("dpgpd_exact", "adpgpd_model") and not closed_form:
            raise ConfigError(f"driver {self.driver} needs the quadratic navigation task")
        if self.track_phi and not closed_form:
            raise ConfigError("potential tracking needs a closed-form reference (quadratic navigation)")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.eta <= 0 or self.tau < 0 or self.xi <= 0:
            raise ConfigError("need eta > 0, tau >= 0, xi > 0")
        if min(self.T, self.N, self.M, self.max_horizon, self.n_probes, self.ref_T) < 1:
            raise ConfigError("counts must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if self.sgd_init not in ("zero", "proximal") or self.model_fit not in ("exact", "sgd"):
            raise ConfigError("sgd_init must be zero|proximal and model_fit exact|sgd")

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        typed = {k: _coerce(k, v) for k, v in data.items()}
        try:
            return cls(**typed)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_toml(text)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, pairs) -> "RunConfig":
        """Apply ``key=value`` strings."""
        changes = {}
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value, got {item!r}")
            k, v = item.split("=", 1)
            changes[k.strip()] = parse_value(k.strip(), v.strip())
        return RunConfig.from_dict({**self.to_dict(), **changes})

    def digest(self, keys=None) -> str:
        d = self.to_dict()
        if keys is not None:
            d = {k: d[k] for k in keys}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_DEFAULTS = {f.name: f.default for f in fields(RunConfig)}


def _coerce(key, value):
    default = _DEFAULTS[key]
    if key == "seeds":
        if isinstance(value, str):
            return _parse_seeds(value)
        return tuple(int(v) for v in value)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} must be a boolean")
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


def _parse_seeds(text: str) -> tuple:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi)))
    return tuple(int(x) for x in text.split(",") if x.strip())


def parse_value(key: str, text: str):
    """Parse a command-line string into the type of config field ``key``."""
    if key not in _DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    default = _DEFAULTS[key]
    try:
        if key == "seeds":
            return _parse_seeds(text)
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return low in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def builtin_presets() -> list:
    """The four benchmark parameter sets; other quantities use the documented defaults of :class:`RunConfig`."""
    nav_seeds = tuple(range(10))
    return [
        RunConfig(experiment="nav-quadratic", driver="dpgpd_exact", env="nav", variant="quadratic",
                  tau=0.01, eta=0.01, b=-90.0, T=2000, seeds=nav_seeds),
        RunConfig(experiment="nav-absolute", driver="adpgpd_sample", env="nav", variant="absolute",
                  tau=0.2, eta=0.0001, b=-1000.0, T=40_000, seeds=nav_seeds),
        RunConfig(experiment="nav-zone", driver="adpgpd_sample", env="nav", variant="zone",
                  tau=0.01, eta=0.00005, b=-200.0, T=50_000, seeds=nav_seeds),
        RunConfig(experiment="burgers", driver="adpgpd_sample", env="burgers", variant="fluid",
                  gamma=0.95, tau=0.001, eta=0.001, b=-20.0, T=10_000, grid_size=10, dt=0.01,
                  viscosity=0.1, action_bound=5.0, sample_state_bound=2.0, seeds=nav_seeds),
    ]


def preset(name: str) -> RunConfig:
    for cfg in builtin_presets():
        if cfg.experiment == name:
            return cfg
    raise ConfigError(f"unknown preset {name!r}; choose from {[c.experiment for c in builtin_presets()]}")


# -- instances and drivers ---------------------------------------------------

def build_instance(cfg: RunConfig, rng=None) -> CmdpInstance:
    if cfg.env == "nav":
        env = nav_build(cfg.Ts, rng=rng, state_bound=cfg.state_bound)
        reward, utility = nav_rewards(cfg.variant)
        initial = NavInitial(cfg.position_half_width, cfg.velocity_var)
    else:
        env = burgers_build(cfg.grid_size, cfg.dt, cfg.viscosity, cfg.noise_scale, rng=rng,
                            state_bound=cfg.state_bound)
        reward, utility = FluidStateReward(cfg.grid_size), FluidActionL1(cfg.grid_size)
        initial = BumpInitial(tuple(env.nodes), cfg.bump_lo, cfg.bump_hi)
    return CmdpInstance(env, reward, utility, cfg.b, cfg.gamma, cfg.action_bound, initial,
                        cfg.state_bound, cfg.xi, name=cfg.experiment)


def scalar_instance(b0: float = 0.5, b1: float = 1.0, noise_var: float = 0.25, gamma: float = 0.5,
                    action_bound: float = 10.0, rng=None) -> CmdpInstance:
    """One-dimensional linear-Gaussian test instance with quadratic reward and utility."""
    env = LinearGaussianEnv([[b0]], [[b1]], [[noise_var]], rng=rng)
    reward = QuadraticReward(np.array([[-1.0]]), np.array([[-0.1]]))
    utility = QuadraticReward(np.array([[-0.1]]), np.array([[-1.0]]))
    initial = GaussianInitial(np.array([1.0]), np.array([[0.25]]))
    return CmdpInstance(env, reward, utility, -2.0, gamma, action_bound, initial, name="scalar")


def solver_options(cfg: RunConfig) -> SolverOptions:
    return SolverOptions(kappa0=cfg.kappa0, step_multiplier=cfg.step_multiplier, theta_max=cfg.theta_max,
                         augment_bias=cfg.augment_bias, dual_rollouts=cfg.M, max_horizon=cfg.max_horizon,
                         normalized_return=cfg.normalized_return, sgd_init=cfg.sgd_init,
                         model_fit=cfg.model_fit, sample_state_bound=cfg.sample_state_bound)


_REF_KEYS = ("env", "variant", "gamma", "b", "xi", "action_bound", "Ts", "position_half_width",
             "velocity_var", "ref_eta", "ref_tau", "ref_T", "n_probes")


def reference_pair(cfg: RunConfig, cache_dir=None):
    """Approximate regularized saddle pair and probe states, cached by config hash.

    The pair is the last iterate of a long exact run at ``(ref_eta, ref_tau)``;
    probes come from its discounted visitation distribution.
    """
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f".reference_{cfg.digest(_REF_KEYS)}.npz"
        if path.exists():
            z = np.load(path)
            return AffinePolicy(z["K"], z["k"], cfg.action_bound), float(z["lam"]), z["probes"]
    inst = build_instance(cfg, rng=np.random.default_rng(0))
    params = RegularizationParams.from_instance(inst, cfg.ref_tau, cfg.ref_eta)
    rec = run_dpgpd_exact(inst, params, cfg.ref_T)
    probe_rng = np.random.default_rng(np.random.SeedSequence([0x5EED, cfg.n_probes]))
    inst.env.reseed(probe_rng)
    probes = visitation_states(inst, rec.final_policy, probe_rng, cfg.n_probes, cfg.max_horizon)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, K=rec.final_policy.K, k=rec.final_policy.k, lam=rec.final_lambda, probes=probes)
    return rec.final_policy, rec.final_lambda, probes


def run_seed(cfg: RunConfig, seed: int, reference=None) -> RunRecord:
    inst = build_instance(cfg, rng=np.random.default_rng(seed))
    params = RegularizationParams.from_instance(inst, cfg.tau, cfg.eta)
    ref, probes = (None, None) if reference is None else ((reference[0], reference[1]), reference[2])
    opts = solver_options(cfg)
    if cfg.driver == "dpgpd_exact":
        rec = run_dpgpd_exact(inst, params, cfg.T, seed=seed, reference=ref, probes=probes)
    elif cfg.driver == "adpgpd_model":
        rec = run_adpgpd(inst, params, cfg.T, cfg.N, seed=seed, mode="model_based", opts=opts,
                         reference=ref, probes=probes)
    elif cfg.driver == "adpgpd_sample":
        rec = run_adpgpd(inst, params, cfg.T, cfg.N, seed=seed, mode="sample_based", opts=opts,
                         reference=ref, probes=probes)
    else:
        rec = run_pgdual(inst, params, cfg.T, cfg.N, seed=seed, opts=opts, reference=ref, probes=probes)
    for row in rec.rows:
        vals = (row.v_r, row.v_g, row.lam) + (() if math.isnan(row.phi) else (row.phi,))
        if not all(math.isfinite(v) for v in vals):
            raise DriverAbort("non-finite value in run record", iteration=row.t, seed=seed)
    return rec


# -- persistence ---------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def records_csv(rec: RunRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rec.rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


AGG_FIELDS = ("v_r", "v_g", "lambda", "phi", "fallbacks", "cap_hits")


def aggregate_csv(records) -> str:
    """Per-iteration mean and population std (ddof=0) across seeds."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t", "n_seeds"]
    for name in AGG_FIELDS:
        header += [f"mean_{name}", f"std_{name}"]
    w.writerow(header)
    if not records:
        return buf.getvalue()
    T = min(len(r) for r in records)
    cols = {name: np.stack([r.column(name)[:T] for r in records]) for name in AGG_FIELDS}
    for t in range(T):
        row = [str(t), str(len(records))]
        for name in AGG_FIELDS:
            x = cols[name][:, t]
            if np.all(np.isnan(x)):
                row += ["", ""]
            else:
                row += [_fmt(np.mean(x)), _fmt(np.std(x))]
        w.writerow(row)
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class ExperimentResult:
    config: RunConfig
    records: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    paths: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _worker(args):
    cfg, seed, reference = args
    try:
        return seed, run_seed(cfg, seed, reference), None
    except DriverAbort as exc:
        return seed, None, str(exc)
    except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        return seed, None, f"{type(exc).__name__}: {exc} (seed={seed})"


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    return max(1, n)


def run_experiment(cfg: RunConfig, workers=None, write: bool = True) -> ExperimentResult:
    """Run every seed (in a bounded process pool when ``workers > 1``) and write CSVs."""
    cfg.validate()
    out = Path(cfg.output_dir)
    reference = reference_pair(cfg, out if write else None) if cfg.track_phi else None
    workers = worker_count() if workers is None else max(1, int(workers))
    jobs = [(cfg, s, reference) for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    res = ExperimentResult(cfg)
    for seed, rec, err in results:
        if err is None:
            res.records[seed] = rec
        else:
            log.error("run aborted: %s", err)
            res.failures[seed] = err
    if write:
        out.mkdir(parents=True, exist_ok=True)
        for seed in sorted(res.records):
            p = out / f"{cfg.experiment}_seed{seed}.csv"
            p.write_text(records_csv(res.records[seed]))
            res.paths.append(p)
        for seed, err in sorted(res.failures.items()):
            p = out / f"{cfg.experiment}_seed{seed}.failed"
            p.write_text(err + "\n")
            res.paths.append(p)
        p = out / f"{cfg.experiment}_agg.csv"
        p.write_text(aggregate_csv([res.records[s] for s in sorted(res.records)]))
        res.paths.append(p)
        (out / f"{cfg.experiment}.toml").write_text(cfg.to_toml())
    return res


def sweep_configs(cfg: RunConfig, grid: dict) -> list:
    """Cartesian product over ``{key: [values...]}``; experiment ids get ``__key=value`` suffixes."""
    import itertools

    keys = list(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        suffix = "__".join(f"{k}={v}" for k, v in zip(keys, combo))
        changes = dict(zip(keys, combo))
        changes["experiment"] = f"{cfg.experiment}__{suffix}"
        out.append(RunConfig.from_dict({**cfg.to_dict(), **changes}))
    return out
