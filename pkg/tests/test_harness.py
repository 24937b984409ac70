import json
import pathlib

import numpy as np
import pytest

from secal import cli
from secal.config import (
    RunConfig,
    config_hash,
    derive_seed,
    load_config,
    write_csv,
    write_manifest,
)
from secal.experiments import (
    _t90_band,
    default_config,
    loglog_slope,
    run_exp4,
)


# -- seeds and config ---------------------------------------------------------


def test_derive_seed_is_deterministic_and_tag_sensitive():
    assert derive_seed(0, "train", 1 / 16) == derive_seed(0, "train", 1 / 16)
    assert derive_seed(0, "train", 1 / 16) != derive_seed(0, "train", 1 / 64)
    assert derive_seed(0, "train") != derive_seed(1, "train")
    seeds = {derive_seed(s, "x") for s in range(1000)}
    assert len(seeds) == 1000  # no collisions at this scale
    assert all(0 <= s < 2**31 for s in seeds)


def test_runconfig_roundtrip_and_unknown_keys():
    cfg = RunConfig(experiment="exp1", h=(1 / 16, 1 / 64), seeds=(0, 1))
    again = RunConfig.from_dict(cfg.to_dict())
    assert again == cfg
    # unknown keys land in params instead of failing
    d = cfg.to_dict()
    d["n_tasks"] = 300
    cfg2 = RunConfig.from_dict(d)
    assert cfg2.params["n_tasks"] == 300


def test_config_hash_is_stable_and_sensitive():
    cfg = RunConfig(experiment="exp2")
    assert cfg.hash == RunConfig(experiment="exp2").hash
    assert cfg.hash != RunConfig(experiment="exp2", world_seed=1).hash
    assert len(cfg.hash) == 16
    # hash ignores key order
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_load_config_yaml(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("experiment: exp3\nseeds: [3, 4]\nn_cal: 500\n")
    cfg = load_config(str(p))
    assert cfg.experiment == "exp3"
    assert cfg.seeds == (3, 4) and cfg.n_cal == 500
    p.write_text("- just\n- a\n- list\n")
    with pytest.raises(ValueError):
        load_config(str(p))


def test_default_config_per_experiment():
    assert default_config("exp1").methods == ("poly_heldout", "poly_cv", "buckets", "nw")
    assert default_config("exp3").seeds == tuple(range(50))
    assert len(default_config("exp4").seeds) == 200
    with pytest.raises(ValueError):
        default_config("exp9")


def test_write_csv_and_manifest(tmp_path):
    f = write_csv(tmp_path / "x.csv", "a,b", ["1,2", "3,4"])
    assert pathlib.Path(f).read_text() == "a,b\n1,2\n3,4\n"
    cfg = RunConfig(experiment="exp1", out=str(tmp_path))
    mpath = write_manifest(str(tmp_path), "x", cfg, [f], extra={"schema": "x.v1"})
    meta = json.loads(pathlib.Path(mpath).read_text())
    assert meta["config_hash"] == cfg.hash
    assert meta["schema"] == "x.v1"
    assert meta["outputs"] == [f]


# -- summary helpers ----------------------------------------------------------


def test_loglog_slope_recovers_power_law():
    n = np.array([100, 1000, 10000])
    slope, intercept = loglog_slope(n, 3.0 * n**-0.5)
    assert slope == pytest.approx(-0.5, abs=1e-12)
    assert 10**intercept == pytest.approx(3.0)


def test_t90_band_contains_mean():
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    lo, hi = _t90_band(vals)
    assert lo < vals.mean() < hi
    lo1, hi1 = _t90_band(np.array([5.0]))
    assert lo1 == hi1 == 5.0


# -- byte-identical reproducibility ------------------------------------------


def test_exp4_outputs_are_byte_identical_across_runs(tmp_path):
    def run(d):
        cfg = default_config("exp4", out=str(d), seeds=(0, 1),
                             n_tasks=200, surrogate=True)
        run_exp4(cfg)
        return (d / "exp4.csv").read_bytes()

    assert run(tmp_path / "a") == run(tmp_path / "b")


# -- CLI smoke ----------------------------------------------------------------


def _write_batch_csv(path, n, seed):
    rng = np.random.default_rng(seed)
    m = rng.random(n)
    v = rng.random(n) * 0.25
    y1 = (rng.random(n) < m).astype(int)
    y2 = (rng.random(n) < m).astype(int)
    lines = ["m,v,y1,y2"]
    lines += [f"{float(a)!r},{float(b)!r},{c},{d}" for a, b, c, d in zip(m, v, y1, y2)]
    path.write_text("\n".join(lines) + "\n")


def test_cli_perturb_roundtrip(tmp_path):
    raw = tmp_path / "raw.csv"
    rng = np.random.default_rng(0)
    m = rng.random(100)
    v = rng.random(100) * 0.2
    raw.write_text("m_raw,v_raw\n" + "\n".join(
        f"{float(a)!r},{float(b)!r}" for a, b in zip(m, v)) + "\n")
    rc = cli.main(["perturb", "--dataset", str(raw), "--out", str(tmp_path),
                   "--seed", "0", "--h", "0.0625"])
    assert rc == 0
    out = (tmp_path / "perturbed.csv").read_text().strip().split("\n")
    assert out[0] == "m_raw,v_raw,m,v"
    assert len(out) == 101
    vals = np.array([row.split(",") for row in out[1:]], dtype=float)
    assert np.all((vals[:, 2] >= 0) & (vals[:, 2] <= 1))
    assert np.all((vals[:, 3] >= 0) & (vals[:, 3] <= 0.25))


def test_cli_fit_estimate_recalibrate(tmp_path, capsys):
    batch = tmp_path / "batch.csv"
    _write_batch_csv(batch, 800, seed=1)
    assert cli.main(["fit", "--dataset", str(batch), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fit_eta1.json").exists()
    assert (tmp_path / "fit_eta2.json").exists()
    capsys.readouterr()

    rc = cli.main(["estimate", "--dataset", str(batch), "--out", str(tmp_path),
                   "--format", "json"])
    assert rc == 0
    rep = json.loads(capsys.readouterr().out.strip())
    assert rep["n"] == 800 and rep["ce2"] >= 0

    rc = cli.main(["recalibrate", "--dataset", str(batch), "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "recalibrated.csv").read_text().strip().split("\n")
    assert lines[0] == "m,v,m_recal,v_recal"
    assert len(lines) == 801


def test_cli_estimate_without_fit_fails_loudly(tmp_path):
    batch = tmp_path / "batch.csv"
    _write_batch_csv(batch, 50, seed=2)
    with pytest.raises(SystemExit):
        cli.main(["estimate", "--dataset", str(batch), "--out", str(tmp_path)])


def test_cli_exp4_runs_small_config(tmp_path, capsys):
    cfgfile = tmp_path / "cfg.yaml"
    cfgfile.write_text(
        f"experiment: exp4\nout: {tmp_path}\nseeds: [0]\nn_tasks: 150\n"
        "surrogate: true\n")
    rc = cli.main(["exp4", "--config", str(cfgfile), "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "exp4.csv").exists()
    assert (tmp_path / "exp4.manifest.json").exists()
    meta = json.loads((tmp_path / "exp4.manifest.json").read_text())
    assert set(meta["win_fractions"]) == {
        "raw_m", "raw_s", "raw_s_flip", "first_1d", "second_1d"}
