from __future__ import annotations

from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from vortexlab.errors import ConfigError
from vortexlab.models import RunConfig, StudyReport, load_run_config, parse_run_config


def _sample() -> Dict[str, Any]:
    return {
        "domain": {"nx": 48, "ny": 40, "lx": 1.0, "ly": 1.0},
        "params": {"eps": 0.05, "alpha": 1.0, "beta": 0.2},
        "landscape": {"kind": "gaussian_well", "wells": [{"center": [0.5, 0.5], "depth": 0.4, "width": 0.2}]},
        "boundary": {"H": "x*y", "J": ["0.5", "0"]},
        "vortices": [{"position": [0.5, 0.5], "degree": -1}],
    }


def test_defaults_validate() -> None:
    config = RunConfig()
    assert config.flavor == "forced_gl"
    assert config.domain.nx == 64
    assert config.positions == [] and config.degrees == []


def test_sample_parses() -> None:
    config = parse_run_config(_sample())
    assert config.degrees == [-1]
    assert config.positions == [(0.5, 0.5)]
    assert config.boundary.J == ("0.5", "0")


def test_hash_ignores_key_order() -> None:
    data = _sample()
    permuted = {k: data[k] for k in reversed(list(data))}
    permuted["domain"] = {k: data["domain"][k] for k in reversed(list(data["domain"]))}
    assert parse_run_config(data).config_hash() == parse_run_config(permuted).config_hash()


def test_hash_changes_with_content() -> None:
    data = _sample()
    other = dict(data, params={"eps": 0.04})
    assert parse_run_config(data).config_hash() != parse_run_config(other).config_hash()


def test_malformed_expression_names_field() -> None:
    data = _sample()
    data["boundary"]["H"] = "sin(x"
    with pytest.raises(ConfigError) as info:
        parse_run_config(data)
    assert info.value.field == "boundary.H"
    assert info.value.to_dict()["error"] == "ConfigError"


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"params": {"eps": 0.6}}, "params.eps"),
        ({"params": {"eps": 0.4}}, "params.eps"),
        ({"domain": {"nx": 8}}, "domain.nx"),
        ({"landscape": {"kind": "gaussian_well"}}, "landscape"),
        ({"vortices": [{"position": [0.5, 0.5], "degree": 2}]}, "vortices.0.degree"),
        ({"critical": {"lambdas": [0.5, 0.1]}}, "critical.lambdas"),
        ({"unknown": 1}, "unknown"),
    ],
)
def test_invalid_configs(patch: Dict[str, Any], field: str) -> None:
    with pytest.raises(ConfigError) as info:
        parse_run_config(dict(_sample(), **patch))
    assert info.value.field == field


def test_load_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ConfigError) as info:
        load_run_config(tmp_path / "nope.json")
    assert info.value.field == "<file>"


def test_load_from_file(write_config: Callable[[Dict[str, Any]], Path]) -> None:
    path = write_config(_sample())
    assert load_run_config(path).domain.nx == 48


def test_study_report_passes_only_when_all_rows_pass() -> None:
    report = StudyReport(kind="demo", config_hash="abc")
    report.add({"eps": 0.1}, {"error": 0.2}, passed=True)
    report.add({"eps": 0.05}, {"error": 0.1})
    assert report.passed
    assert report.rows[0].config_hash == "abc"
    report.verdicts["decreasing"] = False
    assert not report.passed
