import json
import math

import numpy as np
import pytest

from calabiflow import SymplecticPotential, save_snapshot
from calabiflow.cli import main
import calabiflow.cli as cli_mod


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_baseline_passes(capsys):
    code, out, _ = run_cli(capsys, "baseline")
    assert code == 0
    assert out.count("[ok  ]") >= 12
    assert "FAIL" not in out


def test_baseline_json(capsys):
    code, out, _ = run_cli(capsys, "--json", "baseline")
    assert code == 0
    data = json.loads(out)
    assert data["passed"] is True
    assert len(data["checks"]) >= 12


def test_baseline_fault_injection(capsys, monkeypatch):
    import calabiflow.potential as pot

    orig = pot.fs_inverse_hessian

    def corrupted(points):
        out = orig(points)
        return -out  # flipped sign

    monkeypatch.setattr(cli_mod, "fs_inverse_hessian", corrupted)
    code, out, _ = run_cli(capsys, "baseline")
    assert code == 1
    assert "FAIL" in out
    assert "inverse Hessian" in out


def test_flow_command_fixed_point(capsys, tmp_path, triangle_file):
    cfg = {
        "polytope": str(triangle_file),
        "class": {"p": [0, 0], "c_S": 1.0, "scal_S": 0, "m": 0, "chi_S": 1},
        "grid": {"N": 24, "delta_min_factor": 0.5},
        "perturbation": {"kind": "none"},
        "t_end": 1.0,
        "max_steps": 10,
        "monitor_every": 2,
        "snapshot_every": 0,
        "out_dir": str(tmp_path / "out"),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    code, out, err = run_cli(capsys, "--json", "flow", str(cfg_path))
    assert code == 0, err
    data = json.loads(out)
    assert data["steps"] == 10
    assert data["final_report"]["calabi"] <= 1e-12
    assert (tmp_path / "out" / "monitor.csv").exists()
    assert (tmp_path / "out" / "snapshot_final.csv").exists()


def test_flow_command_monotone_calabi(capsys, tmp_path, triangle_file):
    cfg = {
        "polytope": str(triangle_file),
        "class": {"p": [1, 1], "c_S": 12, "scal_S": -1, "m": 1, "chi_S": -2},
        "grid": {"N": 24},
        "perturbation": {"kind": "bump", "amplitude": 0.05},
        "t_end": 1.0,
        "max_steps": 20,
        "monitor_every": 2,
        "snapshot_every": 0,
        "out_dir": str(tmp_path / "out2"),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    code, out, err = run_cli(capsys, "flow", str(cfg_path))
    assert code == 0, err
    rows = (tmp_path / "out2" / "monitor.csv").read_text().strip().splitlines()
    ca = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(ca[k + 1] < ca[k] for k in range(len(ca) - 1))


def test_flow_missing_polytope(capsys, tmp_path):
    cfg = {
        "polytope": str(tmp_path / "nope.json"),
        "class": {"p": [0, 0], "c_S": 1.0, "scal_S": 0, "m": 0},
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    code, _, err = run_cli(capsys, "flow", str(cfg_path))
    assert code == 2
    assert "does not exist" in err


def test_flow_unknown_key(capsys, tmp_path, triangle_file):
    cfg = {
        "polytope": str(triangle_file),
        "class": {"p": [0, 0], "c_S": 1.0, "scal_S": 0, "m": 0},
        "wibble": 3,
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    code, _, err = run_cli(capsys, "flow", str(cfg_path))
    assert code == 2
    assert "wibble" in err


@pytest.fixture()
def fs_snapshot(tmp_path, triangle, grid48):
    u = SymplecticPotential.from_node_values(triangle, grid48, np.zeros(grid48.n_nodes))
    path = tmp_path / "fs.csv"
    save_snapshot(u, path, t=0.0)
    return path


def test_curvature_command(capsys, fs_snapshot):
    code, out, err = run_cli(capsys, "curvature", "--snapshot", str(fs_snapshot),
                             "--at", "0", "0")
    assert code == 0, err
    data = json.loads(out)
    assert data["r_fiber"] == pytest.approx(4.0, abs=1e-9)
    assert data["rm2_fiber"] == pytest.approx(4.0 / 3.0, abs=1e-9)


def test_curvature_command_with_class(capsys, fs_snapshot, tmp_path):
    cpath = tmp_path / "class.json"
    cpath.write_text(json.dumps({"p": [1, 1], "c_S": 12, "scal_S": -1, "m": 1, "chi_S": -2}))
    code, out, err = run_cli(capsys, "curvature", "--snapshot", str(fs_snapshot),
                             "--at", "0", "0", "--class", str(cpath))
    assert code == 0, err
    data = json.loads(out)
    assert data["rm2_total"] >= data["rm2_fiber"]
    assert data["r_weighted"] == pytest.approx(-1.0 / 12.0 + 4.0, abs=1e-9)


def test_curvature_exterior_point(capsys, fs_snapshot):
    code, _, err = run_cli(capsys, "curvature", "--snapshot", str(fs_snapshot),
                           "--at", "5", "5")
    assert code == 2
    assert "outside" in err


def test_energy_command(capsys, fs_snapshot):
    code, out, err = run_cli(capsys, "energy", "--snapshot", str(fs_snapshot))
    assert code == 0, err
    data = json.loads(out)
    assert data["calabi"] <= 1e-12
    assert data["r_bar"] == pytest.approx(4.0, abs=1e-8)


def test_sobolev_bound_command(capsys):
    code, out, err = run_cli(capsys, "sobolev-bound", "--ca", "0")
    assert code == 0, err
    data = json.loads(out)
    assert data["sobolev_bound"] == pytest.approx(1.0, rel=1e-12)
    assert data["yamabe_lower"] == pytest.approx(12 * math.pi, rel=1e-12)


def test_fiber_bound_command(capsys, tmp_path):
    cpath = tmp_path / "class.json"
    cpath.write_text(json.dumps({"p": [1, 1], "c_S": 12, "scal_S": -1, "m": 1, "chi_S": -2}))
    code, out, err = run_cli(capsys, "fiber-bound", "--class", str(cpath))
    assert code == 0, err
    data = json.loads(out)
    assert data["fiber_l2_bound"] == pytest.approx(11.55, abs=1e-10)
    assert data["ca_bound"] / math.pi**2 == pytest.approx(44.4, abs=1e-10)


def test_fiber_bound_regime_error(capsys, tmp_path):
    cpath = tmp_path / "class.json"
    cpath.write_text(json.dumps({"p": [1, 1], "c_S": 11, "scal_S": -1, "m": 1, "chi_S": -2}))
    code, _, err = run_cli(capsys, "fiber-bound", "--class", str(cpath))
    assert code == 2
    assert "12 p1" in err


def test_emit_plots(capsys, tmp_path, triangle_file):
    cfg = {
        "polytope": str(triangle_file),
        "class": {"p": [0, 0], "c_S": 1.0, "scal_S": 0, "m": 0},
        "grid": {"N": 24},
        "t_end": 1.0,
        "max_steps": 4,
        "monitor_every": 2,
        "snapshot_every": 0,
        "out_dir": str(tmp_path / "out3"),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    code, _, err = run_cli(capsys, "--emit-plots", "flow", str(cfg_path))
    assert code == 0, err
    assert (tmp_path / "out3" / "plot_calabi.dat").exists()
    body = (tmp_path / "out3" / "plot_calabi.dat").read_text().strip().splitlines()
    assert len(body) == 2 and len(body[0].split()) == 2


def test_deterministic_outputs(capsys, tmp_path, triangle_file):
    cfg = {
        "polytope": str(triangle_file),
        "class": {"p": [1, 1], "c_S": 12, "scal_S": -1, "m": 1, "chi_S": -2},
        "grid": {"N": 24},
        "perturbation": {"kind": "bump", "amplitude": 0.02},
        "t_end": 1.0,
        "max_steps": 6,
        "monitor_every": 2,
        "snapshot_every": 0,
    }
    outs = []
    for tag in ("a", "b"):
        c = dict(cfg, out_dir=str(tmp_path / tag))
        p = tmp_path / f"run_{tag}.json"
        p.write_text(json.dumps(c))
        code, _, err = run_cli(capsys, "flow", str(p))
        assert code == 0, err
        outs.append((tmp_path / tag / "monitor.csv").read_bytes())
    assert outs[0] == outs[1]


def test_threads_flag_validates(capsys):
    code, _, err = run_cli(capsys, "--threads", "0", "baseline")
    assert code == 2


def test_stiffness_exit_code(capsys, tmp_path, triangle_file):
    # absurd CFL factor: every retry fails, distinct exit code, partial flush
    cfg = {
        "polytope": str(triangle_file),
        "class": {"p": [0, 0], "c_S": 1.0, "scal_S": 0, "m": 0},
        "grid": {"N": 16},
        "perturbation": {"kind": "bump", "amplitude": 0.02},
        "t_end": 1.0,
        "max_steps": 3,
        "cfl_sigma": 1e18,
        "monitor_every": 1,
        "snapshot_every": 0,
        "out_dir": str(tmp_path / "stiff"),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    code, _, err = run_cli(capsys, "flow", str(cfg_path))
    assert code == 3
    assert "rejected" in err
    assert (tmp_path / "stiff" / "monitor.csv").exists()
