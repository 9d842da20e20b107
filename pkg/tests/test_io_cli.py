import json
import os

import numpy as np
import pytest

from thinband import averaging, builtin_scenario, io, surface, thin
from thinband.cli import main
from thinband.errors import ValidationError


def small_thin_run(tmp_path, name="run"):
    sc = builtin_scenario("pulsating_ellipse")
    grid = thin.ThinGrid(n_theta=8, n_sigma=4, eps=0.2)
    traj = thin.solve(sc, grid, 1e-2, t_end=0.05,
                      snapshot_times=[0.0, 0.05])
    outdir = str(tmp_path / name)
    io.write_thin_run(outdir, sc, traj, 1e-2)
    return sc, traj, outdir


def test_thin_run_round_trip(tmp_path):
    sc, traj, outdir = small_thin_run(tmp_path)
    sc2, dt, traj2 = io.read_thin_run(outdir)
    assert dt == 1e-2
    assert sc2.name == sc.name
    for a, b in zip(traj.states, traj2.states):
        assert np.array_equal(a.U, b.U)


def test_surface_run_round_trip(tmp_path):
    sc = builtin_scenario("expanding_circle")
    grid = surface.SurfaceGrid(n_theta=8)
    traj = surface.solve(sc, grid, 1e-2, t_end=0.05,
                         snapshot_times=[0.0, 0.05])
    outdir = str(tmp_path / "srun")
    io.write_surface_run(outdir, sc, traj, 1e-2)
    sc2, dt, traj2 = io.read_surface_run(outdir)
    for a, b in zip(traj.states, traj2.states):
        assert np.array_equal(a.v, b.v)
        assert np.array_equal(a.zeta, b.zeta)


def test_averaged_trace_round_trip(tmp_path):
    sc, traj, _ = small_thin_run(tmp_path)
    trace = averaging.average_trajectory(sc, traj)
    outdir = str(tmp_path / "avg")
    io.write_averaged_trace(outdir, sc, trace)
    sc2, trace2 = io.read_averaged_trace(outdir)
    assert np.array_equal(trace.v, trace2.v)
    assert np.array_equal(trace.zeta, trace2.zeta)
    assert np.array_equal(trace.w, trace2.w)
    assert np.array_equal(trace.flux_diag, trace2.flux_diag)


def test_manifest_declares_every_output(tmp_path):
    sc, traj, outdir = small_thin_run(tmp_path)
    manifest = io.read_manifest(outdir)
    on_disk = sorted(
        f for f in os.listdir(outdir) if f != "timing.json"
    )
    assert sorted(manifest["outputs"]) == on_disk


def test_identical_configs_identical_bytes(tmp_path):
    _, _, out1 = small_thin_run(tmp_path, "a")
    _, _, out2 = small_thin_run(tmp_path, "b")
    for name in sorted(os.listdir(out1)):
        if name == "timing.json":
            continue
        b1 = open(os.path.join(out1, name), "rb").read()
        b2 = open(os.path.join(out2, name), "rb").read()
        assert b1 == b2, name


def test_wrong_kind_rejected(tmp_path):
    sc, traj, outdir = small_thin_run(tmp_path)
    with pytest.raises(ValidationError):
        io.read_surface_run(outdir)
    with pytest.raises(ValidationError):
        io.read_averaged_trace(outdir)
    with pytest.raises(ValidationError):
        io.read_manifest(str(tmp_path / "nowhere"))


def test_schema_version_checked(tmp_path):
    sc, traj, outdir = small_thin_run(tmp_path)
    path = os.path.join(outdir, "manifest.json")
    m = json.load(open(path))
    m["schema"] = "thinband/999"
    json.dump(m, open(path, "w"))
    with pytest.raises(ValidationError):
        io.read_manifest(outdir)


def test_cli_solve_thin_average_pipeline(tmp_path):
    run = str(tmp_path / "thin")
    avg = str(tmp_path / "avg")
    rc = main([
        "solve-thin", "--scenario", "circle", "--eps", "0.2",
        "--n-theta", "8", "--n-sigma", "4", "--dt", "0.01",
        "--t-end", "0.05", "--out", run,
    ])
    assert rc == 0
    assert os.path.exists(os.path.join(run, "manifest.json"))
    rc = main(["average", "--run", run, "--out", avg])
    assert rc == 0
    assert os.path.exists(os.path.join(avg, "averaged.csv"))


def test_cli_solve_limit_and_validate(tmp_path):
    out = str(tmp_path / "limit")
    rc = main([
        "solve-limit", "--scenario", "expanding_circle", "--n-theta", "8",
        "--dt", "0.01", "--t-end", "0.05", "--out", out,
    ])
    assert rc == 0
    rc = main(["validate", "--scenario", "circle",
               "--out", str(tmp_path / "val")])
    assert rc == 0
    assert os.path.exists(str(tmp_path / "val" / "validation.json"))


def test_cli_converge(tmp_path):
    out = str(tmp_path / "study")
    rc = main([
        "converge", "--scenario", "pulsating_ellipse",
        "--eps", "0.4,0.2", "--n-theta", "8", "--n-sigma", "4",
        "--dt", "0.01", "--n-snapshots", "3", "--out", out,
    ])
    assert rc == 0
    for name in ("report.json", "report.csv", "report.txt", "timing.json"):
        assert os.path.exists(os.path.join(out, name)), name


def test_cli_config_errors(tmp_path, capsys):
    assert main(["solve-thin", "--scenario", "missing.json", "--eps", "0.1",
                 "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "missing.json" in err
    assert main(["converge", "--scenario", "circle", "--eps", "0.1,0.2",
                 "--out", str(tmp_path / "y")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "b", "nonsense": 1}))
    assert main(["validate", "--scenario", str(bad)]) == 2


def test_cli_p_override(tmp_path):
    out = str(tmp_path / "p2")
    rc = main([
        "solve-limit", "--scenario", "circle", "--p", "2.0",
        "--n-theta", "8", "--dt", "0.01", "--t-end", "0.02", "--out", out,
    ])
    assert rc == 0
    manifest = io.read_manifest(out)
    assert manifest["scenario"]["p"] == 2.0
