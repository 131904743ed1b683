import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cgflow.expcli import (
    ConfigError,
    cmd_run,
    load_calibration,
    load_config,
    main,
    validate_config,
)


def write_cfg(tmp_path, name="cfg.json", **cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def flow_cfg(tmp_path, outname="out1", **over):
    cfg = {
        "experiment": "flow",
        "sampler": {"kind": "constant", "matrix": [[2.0, 0.0], [0.0, 2.0]]},
        "levels": [1, 2],
        "samples": 2,
        "seed": 5,
        "output_dir": str(tmp_path / outname),
    }
    cfg.update(over)
    return write_cfg(tmp_path, f"{outname}.json", **cfg)


def test_validate_ok(tmp_path):
    p = flow_cfg(tmp_path)
    assert main(["validate", str(p)]) == 0


def test_validate_rejects_missing_seed(tmp_path):
    p = write_cfg(tmp_path, experiment="flow", sampler={"kind": "constant"},
                  levels=[1], samples=1)
    assert main(["validate", str(p)]) == 4


def test_validate_rejects_unknown_sampler(tmp_path):
    p = write_cfg(tmp_path, experiment="flow", sampler={"kind": "zorp"},
                  levels=[1], samples=1, seed=0)
    assert main(["validate", str(p)]) == 4
    with pytest.raises(ConfigError) as ei:
        validate_config(load_config(p))
    # suggestions enumerate the known sampler kinds
    for kind in ("poisson", "laminate", "checkerboard", "stream", "lognormal"):
        assert kind in str(ei.value)


def test_validate_rejects_oversized_level(tmp_path):
    p = write_cfg(tmp_path, experiment="flow", sampler={"kind": "constant"},
                  levels=[9], samples=1, seed=0)
    rc = main(["validate", str(p)])
    assert rc == 4


def test_malformed_json_is_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    assert main(["run", str(p)]) == 4
    with pytest.raises(ConfigError) as ei:
        load_config(p)
    assert "bad.json:1" in str(ei.value)


def test_flow_run_and_outputs(tmp_path):
    p = flow_cfg(tmp_path)
    assert main(["run", str(p)]) == 0
    out = tmp_path / "out1"
    csv_text = (out / "flow.csv").read_text().splitlines()
    assert csv_text[0] == "level,samples,theta_n,theta_n_stderr,theta_hat,fluct,A_bar_flat"
    assert len(csv_text) == 3
    theta = float(csv_text[1].split(",")[2])
    assert abs(theta - 1.0) < 1e-7
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"flow.csv", "flow.json"}
    payload = json.loads((out / "flow.json").read_text())
    assert len(payload["records"]) == 2


def test_flow_rerun_byte_identical(tmp_path):
    p1 = flow_cfg(tmp_path, outname="r1",
                  sampler={"kind": "poisson", "rho": 0.05, "lam": 0.5, "Lam": 2.0},
                  samples=3, workers=1)
    p2 = flow_cfg(tmp_path, outname="r2",
                  sampler={"kind": "poisson", "rho": 0.05, "lam": 0.5, "Lam": 2.0},
                  samples=3, workers=2)
    assert main(["run", str(p1)]) == 0
    assert main(["run", str(p2)]) == 0
    b1 = (tmp_path / "r1" / "flow.csv").read_bytes()
    b2 = (tmp_path / "r2" / "flow.csv").read_bytes()
    assert b1 == b2
    m1 = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "r2" / "manifest.json").read_text())
    assert m1["outputs"]["flow.csv"] == m2["outputs"]["flow.csv"]


def test_seed_env_override(tmp_path, monkeypatch):
    p = flow_cfg(tmp_path, outname="env1",
                 sampler={"kind": "checkerboard", "alpha": 1.0, "beta": 4.0},
                 levels=[1], samples=2)
    monkeypatch.setenv("CG_SEED", "77")
    assert main(["run", str(p)]) == 0
    theta_env = (tmp_path / "env1" / "flow.csv").read_text()
    monkeypatch.delenv("CG_SEED")
    p2 = flow_cfg(tmp_path, outname="env2",
                  sampler={"kind": "checkerboard", "alpha": 1.0, "beta": 4.0},
                  levels=[1], samples=2, seed=77)
    assert main(["run", str(p2)]) == 0
    theta_plain = (tmp_path / "env2" / "flow.csv").read_text()
    assert theta_env == theta_plain


def test_concentration_run(tmp_path):
    p = write_cfg(
        tmp_path, experiment="concentration", seed=3, m=400, trials=500,
        t_factors=[2.0, 3.0], output_dir=str(tmp_path / "conc"),
    )
    assert main(["run", str(p)]) == 0
    lines = (tmp_path / "conc" / "concentration.csv").read_text().splitlines()
    assert lines[0] == "t,empirical_tail,bound,margin"
    for line in lines[1:]:
        t, tail, bound, margin = (float(v) for v in line.split(","))
        assert margin == bound - tail


def test_homog_error_run(tmp_path):
    p = write_cfg(
        tmp_path, experiment="homog-error", seed=1, levels=[2], samples=1,
        sampler={"kind": "constant", "matrix": [[1.5, 0.0], [0.0, 1.5]]},
        a0=[[1.5, 0.0], [0.0, 1.5]],
        output_dir=str(tmp_path / "hh"),
    )
    assert main(["run", str(p)]) == 0
    lines = (tmp_path / "hh" / "homog_error.csv").read_text().splitlines()
    assert lines[0] == "level,error_ratio,profile_E1,profile_Es"
    level, ratio, e1, es = (float(v) for v in lines[1].split(","))
    assert e1 < 1e-6
    assert es < 1e-6


def test_field_sample_run(tmp_path):
    p = write_cfg(
        tmp_path, experiment="field-sample", seed=9, shape=[6, 6],
        sampler={"kind": "checkerboard", "alpha": 1.0, "beta": 4.0},
        output_dir=str(tmp_path / "fs"),
    )
    assert main(["field", "sample", str(p)]) == 0
    from cgflow.fields import load_field

    f = load_field(tmp_path / "fs" / "field.cgf")
    assert f.box.shape == (6, 6)
    manifest = json.loads((tmp_path / "fs" / "manifest.json").read_text())
    assert "field.cgf" in manifest["outputs"]


def test_besov_run(tmp_path):
    p = write_cfg(
        tmp_path, experiment="besov", seed=2, levels=[2],
        sampler={"kind": "checkerboard", "alpha": 1.0, "beta": 4.0},
        output_dir=str(tmp_path / "bs"),
    )
    assert main(["run", str(p)]) == 0
    lines = (tmp_path / "bs" / "besov.csv").read_text().splitlines()
    assert lines[0] == "s,p,q,seminorm,ring_norm"
    assert len(lines) > 1


def test_calibration_loads():
    calib = load_calibration()
    for key in ("harmonic_forward_C", "lipschitz_C", "poincare_C"):
        assert calib[key] > 0.0


def test_console_entry_point(tmp_path):
    p = flow_cfg(tmp_path, outname="cli1", levels=[1], samples=1)
    proc = subprocess.run(
        [sys.executable, "-m", "cgflow.expcli", "validate", str(p)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == "ok"
