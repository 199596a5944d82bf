import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcfsurgery.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_REFUSED, main
from mcfsurgery.config import (ConfigError, RunConfig, ShapeSpec, dump_config, generate_shape,
                               load_config, save_config)

DEMOS = Path(__file__).resolve().parents[1] / "demos"


# -- config ----------------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(H1=st.floats(0.1, 100.0), grid=st.integers(64, 2048), Lam=st.floats(1.0, 1e4),
       bulb=st.floats(0.5, 3.0))
def test_config_roundtrip(tmp_path_factory, H1, grid, Lam, bulb):
    cfg = RunConfig.from_dict({"geometry": {"shape": "dumbbell", "bulb": bulb, "waist": 0.2},
                               "thresholds": {"H1": H1}, "solver": {"grid": grid},
                               "surgery": {"Lam": Lam}})
    path = tmp_path_factory.mktemp("cfg") / "c.toml"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)


@pytest.mark.parametrize("bad", [
    {"geometry": {"shape": "klein-bottle"}},
    {"geometry": {"shape": "sphere", "radius": -1.0}},
    {"geometry": {"shape": "dumbbell", "waist": 2.0}},
    {"geometry": {"shape": "sphere", "colour": 1}},
    {"solver": {"gird": 10}},
    {"telemetry": {}},
    {"solver": 3},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_demo_configs_load():
    for f in DEMOS.glob("*.toml"):
        load_config(f)


def test_generate_profile_and_mesh():
    spec = ShapeSpec("dumbbell", {})
    prof = generate_shape(spec, 128, profile=True)
    assert len(prof) == 128
    mesh = generate_shape(spec, 2)
    assert mesh.closed
    with pytest.raises(ConfigError):
        generate_shape(ShapeSpec("ellipsoid", {}), 64, profile=True)


def test_flow_settings_follow_config():
    cfg = RunConfig.from_dict({"monitor": {"eta0": 0.05}, "solver": {"cfl": 0.1}})
    s = cfg.flow_settings()
    assert s.eta0 == 0.05 and s.cfl == 0.1


# -- CLI --------------------------------------------------------------------------------------

def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def test_analyze_sphere(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "analyze", "--shape", "sphere", "--resolution", 3,
                           "--out", tmp_path / "a.csv")
    assert code == EXIT_OK
    assert out["alpha_in"] == pytest.approx(2.0, rel=0.05)
    assert (tmp_path / "a.csv").exists()


def test_unknown_shape_is_refused_with_json(capsys, tmp_path):
    code, _, err = run_cli(capsys, "analyze", "--shape", "klein", "--out", tmp_path / "a.csv")
    assert code == EXIT_REFUSED
    e = json.loads(err.strip().splitlines()[-1])
    assert e["exit_code"] == EXIT_REFUSED and "klein" in e["message"]


def test_csf_circle(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "csf", "--curve", "circle", "--T", 0.1, "--out", tmp_path / "c.csv")
    assert code == EXIT_OK and out["t_end"] == pytest.approx(0.1)


def test_csf_nonconvex_refused(capsys, tmp_path):
    th = np.linspace(0, 2 * np.pi, 100, endpoint=False)
    r = 1 + 0.4 * np.cos(5 * th)
    path = tmp_path / "star.csv"
    path.write_text("x,y\n" + "".join(f"{r[k] * np.cos(t)},{r[k] * np.sin(t)}\n" for k, t in enumerate(th)))
    code, _, _ = run_cli(capsys, "csf", "--curve", path, "--out", tmp_path / "c.csv")
    assert code == EXIT_REFUSED


def test_neck_on_sphere_finds_nothing(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "neck", "--shape", "sphere", "--out", tmp_path / "n.json")
    assert code == EXIT_OK and out["found"] == 0


def test_surgery_without_neck_refused(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "surgery", "--shape", "sphere", "--out", tmp_path / "s")
    assert code == EXIT_REFUSED


def test_flow_bad_config_refused(capsys, tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[solver]\ngird = 3\n")
    code, _, err = run_cli(capsys, "flow", "--config", cfg)
    assert code == EXIT_REFUSED and "gird" in err


def test_flow_abort_is_numerical_failure(capsys, tmp_path):
    cfg = load_config(DEMOS / "dumbbell.toml")
    cfg.solver.grid = 256
    cfg.monitor.neck_eps = 1e-6
    path = tmp_path / "abort.toml"
    save_config(cfg, path)
    code, _, err = run_cli(capsys, "flow", "--config", path, "--out", tmp_path / "run")
    e = json.loads(err.strip().splitlines()[-1])
    assert code == EXIT_NUMERICAL
    assert Path(e["snapshot"]).exists()


@pytest.fixture(scope="module")
def sphere_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sphere-run")
    assert main(["flow", "--config", str(DEMOS / "sphere.toml"), "--out", str(out),
                 "--snapshot-dt", "0.002"]) == EXIT_OK
    return out


def test_flow_sphere_outputs(sphere_run):
    for name in ("config.toml", "events.jsonl", "series.csv", "history.csv"):
        assert (sphere_run / name).exists()
    assert load_config(sphere_run / "config.toml").geometry.kind == "sphere"


def test_density_on_sphere_history(capsys, sphere_run, tmp_path):
    code, out, _ = run_cli(capsys, "density", "--history", sphere_run, "--t0", 0.25,
                           "--rmax", 0.4, "--n", 4, "--out", tmp_path / "d.csv")
    assert code == EXIT_OK
    assert out["monotone_within_2pct"]
    assert np.allclose(out["theta"], 4 / np.e, rtol=0.02)


def test_density_off_axis_refused(capsys, sphere_run, tmp_path):
    code, _, _ = run_cli(capsys, "density", "--history", sphere_run, "--center", "0.1,0,0",
                         "--t0", 0.2, "--rmax", 0.2, "--out", tmp_path / "d.csv")
    assert code == EXIT_REFUSED


def test_report(capsys, sphere_run):
    code, out, _ = run_cli(capsys, "report", "--run", sphere_run)
    assert code == EXIT_OK
    assert out["ordered"] and out["surgeries"] == 0
    assert out["status"] == "extinct"
    assert (sphere_run / "report.json").exists()


def test_report_missing_run_refused(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "report", "--run", tmp_path)
    assert code == EXIT_REFUSED
