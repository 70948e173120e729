import csv
import math

import numpy as np
import pytest

from dpgpd import cli
from dpgpd import harness
from dpgpd.harness import ConfigError, RunConfig, builtin_presets, preset, run_experiment, sweep_configs
from dpgpd.lq import AffinePolicy
from dpgpd.records import COLUMNS, DriverAbort, potential_phi, settle_time


def _small(tmp_path, name="nav-quadratic", **kw):
    kw.setdefault("T", 10)
    kw.setdefault("seeds", (0, 1))
    return preset(name).replace(output_dir=str(tmp_path), **kw)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_row_counts_and_schema(tmp_path):
    cfg = _small(tmp_path)
    res = run_experiment(cfg, workers=1)
    assert res.ok
    for seed in cfg.seeds:
        rows = _rows(tmp_path / f"nav-quadratic_seed{seed}.csv")
        assert tuple(rows[0]) == COLUMNS and len(rows) == 11
        assert [int(r[0]) for r in rows[1:]] == list(range(10))
    agg = _rows(tmp_path / "nav-quadratic_agg.csv")
    assert len(agg) == 11 and agg[0][:4] == ["t", "n_seeds", "mean_v_r", "std_v_r"]
    assert RunConfig.load(tmp_path / "nav-quadratic.toml") == cfg


@pytest.mark.parametrize("name", ["nav-quadratic", "nav-absolute"])
def test_repeated_runs_byte_identical(tmp_path, name):
    kw = {} if name == "nav-quadratic" else {"N": 20}
    a = run_experiment(_small(tmp_path / "a", name, **kw), workers=1)
    b = run_experiment(_small(tmp_path / "b", name, **kw), workers=2)
    assert a.ok and b.ok
    for pa, pb in zip(sorted(a.paths), sorted(b.paths)):
        if pa.suffix == ".csv":
            assert pa.read_bytes() == pb.read_bytes()


def test_aggregate_matches_recomputation(tmp_path):
    cfg = _small(tmp_path, "nav-absolute", N=20, seeds=(0, 1, 2))
    run_experiment(cfg, workers=1)
    per = [harness.read_csv(tmp_path / f"nav-absolute_seed{s}.csv") for s in cfg.seeds]
    agg = harness.read_csv(tmp_path / "nav-absolute_agg.csv")
    for t, row in enumerate(agg):
        assert int(row["n_seeds"]) == 3
        for name in ("v_r", "v_g", "lambda", "fallbacks", "cap_hits"):
            x = np.array([float(p[t][name]) for p in per])
            assert abs(float(row[f"mean_{name}"]) - x.mean()) <= 1e-12 * max(1.0, abs(x.mean()))
            assert abs(float(row[f"std_{name}"]) - x.std()) <= 1e-12 * max(1.0, x.std())
        assert row["mean_phi"] == "" and all(p[t]["phi"] == "" for p in per)


PINNED = {
    "nav-quadratic": dict(tau=0.01, eta=0.01, b=-90.0, T=2000, driver="dpgpd_exact", variant="quadratic"),
    "nav-absolute": dict(tau=0.2, eta=0.0001, b=-1000.0, T=40_000, variant="absolute"),
    "nav-zone": dict(tau=0.01, eta=0.00005, b=-200.0, T=50_000, variant="zone"),
    "burgers": dict(tau=0.001, eta=0.001, b=-20.0, T=10_000, grid_size=10, dt=0.01, viscosity=0.1,
                    env="burgers"),
}


@pytest.mark.parametrize("name", sorted(PINNED))
def test_preset_values_pinned(name):
    cfg = preset(name)
    for key, val in PINNED[name].items():
        assert getattr(cfg, key) == val, key


def test_presets_round_trip():
    assert [c.experiment for c in builtin_presets()] == ["nav-quadratic", "nav-absolute", "nav-zone", "burgers"]
    for cfg in builtin_presets():
        assert RunConfig.from_toml(cfg.to_toml()) == cfg
        assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_config_fails_closed():
    d = preset("nav-quadratic").to_dict()
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({**d, "etaa": 0.1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**d, "T": "ten"})
    with pytest.raises(ConfigError):
        RunConfig.from_toml("T = = 3")
    with pytest.raises(ConfigError):
        preset("nav-absolute").replace(driver="dpgpd_exact")
    with pytest.raises(ConfigError):
        preset("nav-quadratic").replace(eta=0.0)
    with pytest.raises(ConfigError):
        preset("nope")


def test_overrides_parse_types():
    cfg = preset("nav-quadratic").with_overrides(["T=5", "eta=0.5", "seeds=3:6", "track_phi=true"])
    assert (cfg.T, cfg.eta, cfg.seeds, cfg.track_phi) == (5, 0.5, (3, 4, 5), True)
    with pytest.raises(ConfigError):
        cfg.with_overrides(["bogus=1"])


def test_sweep_expands_grid():
    cfgs = sweep_configs(preset("nav-quadratic"), {"eta": [0.001, 0.01], "tau": [0.0, 0.01]})
    assert len(cfgs) == 4
    assert cfgs[0].experiment == "nav-quadratic__eta=0.001__tau=0.0"
    assert {(c.eta, c.tau) for c in cfgs} == {(0.001, 0.0), (0.001, 0.01), (0.01, 0.0), (0.01, 0.01)}


def test_full_quadratic_preset_completes(tmp_path):
    res = run_experiment(preset("nav-quadratic").replace(seeds=(0,), output_dir=str(tmp_path)), workers=1)
    assert res.ok and len(res.records[0]) == 2000


def test_potential_examples():
    pol = AffinePolicy(np.array([[-0.5, 0.1]]), np.array([0.2]), 10.0)
    s = np.random.default_rng(0).normal(size=(30, 2))
    assert potential_phi(pol, 0.4, pol, 0.4, 0.1, 0.2, s) == 0.0
    assert potential_phi(pol, 0.4, pol, 0.7, 0.1, 0.2, s) == pytest.approx(0.09 / (2 * 1.02))
    other = AffinePolicy(pol.K, pol.k + 1.0, 10.0)
    assert potential_phi(other, 0.4, pol, 0.4, 0.1, 0.2, s) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        potential_phi(pol, 0.4, None, None, 0.1, 0.2, s)


def test_settle_time():
    assert settle_time([-1, 0.5, -0.2, 0.1, 0.3], 0.0) == 3
    assert settle_time([0.1, 0.2], 0.0) == 0
    assert settle_time([0.1, -0.2], 0.1) == 2


def test_tracked_phi_written(tmp_path):
    cfg = _small(tmp_path, track_phi=True, ref_T=50, n_probes=16, seeds=(0,))
    res = run_experiment(cfg, workers=1)
    phi = res.records[0].column("phi")
    assert np.all(np.isfinite(phi)) and np.all(phi >= 0)
    assert list(tmp_path.glob(".reference_*.npz"))


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(harness.WORKERS_ENV, raising=False)
    out = f"output_dir={tmp_path}"
    assert cli.main(["preset", "nav-quadratic", "--dump"]) == 0
    dumped = capsys.readouterr().out
    assert RunConfig.from_toml(dumped) == preset("nav-quadratic")
    assert cli.main(["preset", "nav-quadratic", "--override", "T=3", "--override", "seeds=0", "--override", out]) == 0
    assert len(_rows(tmp_path / "nav-quadratic_seed0.csv")) == 4
    cfg_path = tmp_path / "c.toml"
    cfg_path.write_text(preset("nav-quadratic").replace(T=3, seeds=(0,), output_dir=str(tmp_path)).to_toml())
    assert cli.main(["run", str(cfg_path)]) == 0
    assert cli.main(["sweep", str(cfg_path), "--grid", "eta=0.01,0.02"]) == 0
    assert (tmp_path / "nav-quadratic__eta=0.02_agg.csv").exists()
    bad = tmp_path / "bad.toml"
    bad.write_text(cfg_path.read_text() + "extra = 1\n")
    assert cli.main(["run", str(bad)]) == 1
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == 1
    assert cli.main(["preset", "unknown"]) == 1
    assert cli.main(["preset", "nav-quadratic", "--override", "T=x"]) == 1
    assert cli.main(["sweep", str(cfg_path), "--grid", "seeds=1,2"]) == 1

    def boom(cfg, seed, reference=None):
        raise DriverAbort("diverged", iteration=7, seed=seed)

    monkeypatch.setattr(harness, "run_seed", boom)
    capsys.readouterr()
    assert cli.main(["run", str(cfg_path)]) == 2
    err = capsys.readouterr().err
    assert "t=7" in err and "seed 0" in err
    assert (tmp_path / "nav-quadratic_seed0.failed").exists()


def test_cli_oracle(capsys):
    assert cli.main(["oracle", "dual"]) == 0
    out = capsys.readouterr().out
    vals = dict(line.split(" = ") for line in out.strip().splitlines())
    assert math.isclose(float(vals["interior"]), 0.6995, abs_tol=1e-6)
    assert cli.main(["oracle", "lyapunov"]) == 0
    vals = dict(line.split(" = ") for line in capsys.readouterr().out.strip().splitlines())
    assert abs(float(vals["scalar_P"]) + 8 / 7) < 1e-10
    assert cli.main(["oracle", "nope"]) == 1


def test_worker_env(monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV, "3")
    assert harness.worker_count() == 3
    monkeypatch.setenv(harness.WORKERS_ENV, "x")
    with pytest.raises(ConfigError):
        harness.worker_count()
