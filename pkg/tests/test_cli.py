import json

import numpy as np
import pytest

from qpath import io
from qpath.cli import build_parser, main
from qpath.config import PRESETS, RunConfig, build_config, validate
from qpath.detector import ReadoutRecord
from qpath.errors import ConfigError

SMALL = ["--n", "300", "--seed", "5"]


# --- configuration --------------------------------------------------------------


def test_presets_validate_and_build():
    for name in PRESETS:
        cfg = build_config(name)
        assert cfg.preset == name
        cfg.params()


def test_precedence_preset_file_flag():
    cfg = build_config("fig4", {"n": 500, "window": 0.05}, {"n": 700, "seed": None})
    assert cfg.n == 700 and cfg.window == 0.05 and cfg.xf == -0.29
    assert cfg.seed == RunConfig().seed


def test_manifest_config_accepted():
    cfg = build_config(None, {"format_version": 1, "config": {"preset": "fig3", "n": 123}})
    assert cfg.preset == "fig3" and cfg.n == 123 and cfg.omega_hz == 0.0


@pytest.mark.parametrize("bad", [{"tau": -1.0}, {"n": 0}, {"scheme": "euler"}, {"bogus": 1},
                                 {"window": 0.0}])
def test_validation_names_field(bad):
    with pytest.raises(ConfigError) as info:
        validate(bad)
    assert info.value.exit_code == 2
    assert "config" in str(info.value)


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        build_config("fig9")


def test_config_params_and_initial():
    cfg = build_config("fig2")
    p = cfg.params()
    assert p.omega == pytest.approx(2 * np.pi * 1.08e6)
    assert cfg.initial().x == 0.88
    with pytest.raises(ConfigError):
        RunConfig(x0=0.9, z0=0.9).initial()
    assert json.loads(json.dumps(cfg.to_dict()))["omega_hz"] == 1.08e6


# --- command line ------------------------------------------------------------------


def test_parser_subcommands():
    ap = build_parser()
    args = ap.parse_args(["figure", "fig4", "--T", "1e-7", "--T", "2e-7"])
    assert args.horizons == [1e-7, 2e-7]
    with pytest.raises(SystemExit):
        ap.parse_args(["figure", "fig99"])


def test_simulate_outputs_and_manifest(tmp_path):
    assert main(["simulate", *SMALL, "--out", str(tmp_path)]) == 0
    m = io.read_json(tmp_path / "manifest.json")
    assert m["command"] == "simulate" and m["config"]["seed"] == 5
    for name, digest in m["artifacts"].items():
        assert io.sha256(tmp_path / name) == digest
    tset = io.load_trajectory_set(tmp_path / "trajectories.json")
    assert tset.n_traj == 300


def test_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("QPATH_OUT", str(tmp_path / "root"))
    assert main(["simulate", *SMALL, "--duration", "1.6e-7"]) == 0
    assert (tmp_path / "root" / "simulate" / "manifest.json").exists()


def test_workers_do_not_change_artifacts(tmp_path):
    main(["simulate", *SMALL, "--out", str(tmp_path / "a")])
    main(["simulate", *SMALL, "--workers", "3", "--out", str(tmp_path / "b")])
    ma = io.read_json(tmp_path / "a" / "manifest.json")
    mb = io.read_json(tmp_path / "b" / "manifest.json")
    assert ma == mb


def test_rerun_from_manifest_reproduces(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["figure", "figS2", "--n", "2000", "--out", str(a)]) == 0
    assert main(["figure", "figS2", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert io.read_json(a / "manifest.json") == io.read_json(b / "manifest.json")
    report = io.read_json(a / "figS2_report.json")
    assert report["classification"] == "maximum"


def test_mlp_undriven_analytic(tmp_path):
    assert main(["mlp", "--preset", "fig3", "--out", str(tmp_path)]) == 0
    rep = io.read_json(tmp_path / "mlp_T1_report.json")
    cmp = rep["analytic_comparison"]
    assert max(cmp["max_abs_dx"], cmp["max_abs_dz"]) < 1e-6
    # the selection target is replaced by the endpoint the closed form forces
    assert rep["xf_requested"] == 0.23
    assert abs(rep["boundary_conditions"]["x_f"] - 0.23) < 0.03


def test_reconstruct(tmp_path, fig2_params):
    rec = ReadoutRecord(fig2_params.dt, np.zeros(10))
    io.write_record(tmp_path / "rec.csv", rec)
    out = tmp_path / "out"
    assert main(["reconstruct", str(tmp_path / "rec.csv"), "--omega", "0", "--x0", "0.6",
                 "--z0", "0.8", "--out", str(out)]) == 0
    cols = io.read_columns(out / "states.csv")
    assert cols["x"].size == 11
    m = io.read_json(out / "manifest.json")
    assert m["record"]["sha256"] == io.sha256(tmp_path / "rec.csv")


# --- exit codes ---------------------------------------------------------------------


def test_exit_config_error(tmp_path, capsys):
    assert main(["simulate", "--n", "0", "--out", str(tmp_path)]) == 2
    assert "qpath: error:" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tau": -1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--workers", "0", "--out", str(tmp_path)]) == 2


def test_exit_convergence_failure(tmp_path):
    code = main(["mlp", "--omega", "0", "--tau", "1.25e-6", "--gamma", "0.94e6", "--x0", "1",
                 "--xf", "0.5", "--zf", "-0.85", "--T", "1.424e-6", "--step", "4e-9",
                 "--out", str(tmp_path)])
    assert code == 3
    diag = io.read_json(tmp_path / "solver_failure.json")
    assert diag["starts"] and "shoot" in diag["message"]


def test_exit_insufficient_statistics(tmp_path):
    code = main(["figure", "fig4", "--n", "50", "--window", "0.001", "--out", str(tmp_path)])
    assert code == 4


def test_exit_record_format(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_seconds,r\n0,1\n1.6e-8,1\n3.2e-8,x\n")
    assert main(["reconstruct", str(bad), "--out", str(tmp_path / "o")]) == 6
    assert "line 4" in capsys.readouterr().err


def test_exit_output_is_file(tmp_path):
    f = tmp_path / "file"
    f.write_text("")
    assert main(["simulate", *SMALL, "--out", str(f / "x")]) == 7
