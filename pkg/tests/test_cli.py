from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from vortexlab.commands import COMMANDS
from vortexlab.commands import simulate as simulate_command
from vortexlab.main import main
from vortexlab.services.studies import EnergyGrowth
from vortexlab.services.vortexometry import Trajectory
from vortexlab.storage.run_storage import RunStorage


def run(command: str, config: Path, out: Path) -> int:
    return main([command, "--config", str(config), "--out", str(out), "--log-level", "WARNING"])


def results(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))["results"]


def error_payload(err: str) -> dict:
    line = [line for line in err.splitlines() if line.startswith("{")][-1]
    return json.loads(line)


def test_command_table() -> None:
    assert set(COMMANDS) == {"fields", "simulate", "law", "compare", "critical", "convergence"}


def test_law_decay(tmp_path: Path, write_config) -> None:
    config = write_config({
        "landscape": {"kind": "expression", "expression": "exp((x-0.5)^2 + (y-0.5)^2)"},
        "vortices": [{"position": [0.8, 0.3], "degree": 1}],
        "law": {"dt": 0.001, "horizon": 0.5, "form": "pinning_only"},
    })
    out = tmp_path / "law"
    assert run("law", config, out) == 0

    summary = results(out / "law.json")
    assert summary["stop_reason"] == "horizon"
    assert summary["T_star"] == 0.5
    assert summary["form"] == "pinning_only"
    with open(out / "law_trajectories.csv", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    last = rows[-1]
    decay = np.exp(-2.0 * float(last["t"]))
    assert float(last["x"]) == pytest.approx(0.5 + 0.3 * decay, abs=1e-6)
    assert float(last["y"]) == pytest.approx(0.5 - 0.2 * decay, abs=1e-6)
    assert not (out / ".lock").exists()


def test_bad_expression_is_a_config_error(tmp_path: Path, write_config, capsys: pytest.CaptureFixture) -> None:
    config = write_config({"landscape": {"kind": "expression", "expression": "x +* y"}})
    assert run("law", config, tmp_path / "bad") == 2
    payload = error_payload(capsys.readouterr().err)
    assert payload["error"] == "ConfigError"
    assert payload["detail"]["field"].startswith("landscape")


def test_fields_with_zero_data(tmp_path: Path, write_config) -> None:
    config = write_config({"domain": {"nx": 17, "ny": 17}})
    out = tmp_path / "fields"
    assert run("fields", config, out) == 0
    summary = results(out / "fields.json")
    assert summary["passed"] is True
    for name in ("b", "phi0", "h0", "xi0", "X0", "psi0", "Z", "f_eps"):
        assert (out / f"{name}.vxf").exists()


def test_simulate_exit_code_follows_energy_check(
    tmp_path: Path, write_config, monkeypatch: pytest.MonkeyPatch
) -> None:
    config = write_config({
        "domain": {"nx": 48, "ny": 48},
        "params": {"eps": 0.06},
        "vortices": [{"position": [0.5, 0.5], "degree": 1}],
        "time": {"dt": 1e-4, "horizon": 2e-3, "diagnostics_every": 5},
    })
    out = tmp_path / "simulate"
    assert run("simulate", config, out) == 0
    summary = results(out / "simulation.json")
    assert summary["passed"] is True
    assert [tr["termination"] for tr in summary["trajectories"]] == ["horizon"]

    def nucleating(record) -> EnergyGrowth:
        return EnergyGrowth([0.0], [0.0], 0.0, 0.0, 0.0, np.pi, count_constant=False)

    monkeypatch.setattr(simulate_command, "energy_growth_study", nucleating)
    failed = tmp_path / "nucleated"
    assert run("simulate", config, failed) == 1
    assert results(failed / "simulation.json")["passed"] is False


def test_critical_all_confined(tmp_path: Path, write_config) -> None:
    config = write_config({
        "landscape": {"kind": "expression", "expression": "exp(4*((x-0.5)^2 + (y-0.5)^2))"},
        "forcing": {"mode": "prescribed", "Z": ["1", "0"]},
        "vortices": [{"position": [0.5, 0.5]}],
        "critical": {"lambdas": [0.0, 0.1, 0.2], "radius": 0.1, "horizon": 1.0, "dt": 0.01},
    })
    out = tmp_path / "critical"
    assert run("critical", config, out) == 0
    summary = results(out / "critical.json")
    assert summary["status"] == "above_grid"
    assert summary["lambda0"] is None
    assert (out / "critical.csv").exists()


def test_compare_trajectory_files(tmp_path: Path, write_config) -> None:
    tracks = RunStorage(tmp_path / "tracks", "0" * 64)
    tr = Trajectory(id=0, degree=1)
    for k in range(11):
        tr.append(0.1 * k, (0.5 + 0.02 * k, 0.5))
    tr.close("horizon", 1.0)
    path = tracks.write_trajectories("run.csv", [tr])

    config = write_config({
        "vortices": [{"position": [0.5, 0.5]}],
        "compare": {"pde_trajectories": str(path), "ode_trajectories": str(path)},
    })
    out = tmp_path / "compare"
    assert run("compare", config, out) == 0
    report = results(out / "compare.json")
    assert report["rows"][0]["metrics"]["sup_error"] == 0.0
    assert (out / "trajectories.svg").read_text(encoding="utf-8").startswith("<svg")


def test_convergence_fast_selectors(tmp_path: Path, write_config) -> None:
    config = write_config({
        "convergence": {"selectors": ["grid", "rk4"], "ladder": [17, 33, 65], "dt_ladder": [0.1, 0.05, 0.025]},
    })
    out = tmp_path / "convergence"
    assert run("convergence", config, out) == 0
    report = results(out / "convergence.json")
    assert {row["case"]["quantity"] for row in report["rows"]} == {"gradient", "laplacian", "rk4_trajectory"}
    assert (out / "order_gradient.svg").exists()


def test_locked_output_directory(tmp_path: Path, write_config, capsys: pytest.CaptureFixture) -> None:
    out = tmp_path / "busy"
    out.mkdir()
    (out / ".lock").write_text("1")
    config = write_config({"vortices": [{"position": [0.5, 0.5]}], "law": {"form": "pinning_only"}})
    assert run("law", config, out) == 2
    assert error_payload(capsys.readouterr().err)["error"] == "RunLocked"
    assert (out / ".lock").exists()
