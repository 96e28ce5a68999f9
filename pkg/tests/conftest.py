from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Dict

import numpy as np
import pytest

from vortexlab.services.grid import Grid
from vortexlab.storage.run_storage import RunStorage


@pytest.fixture
def grid() -> Grid:
    return Grid(33, 33)


@pytest.fixture
def storage(tmp_path: Path) -> RunStorage:
    return RunStorage(tmp_path / "run", config_hash="0" * 64)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[Dict[str, Any]], Path]:
    """把配置字典写成 JSON 文件并返回路径"""

    def _write(data: Dict[str, Any], name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write


def smooth_order_parameter(grid: Grid) -> np.ndarray:
    X, Y = grid.mesh()
    return (0.5 + 0.3 * np.cos(np.pi * X) * np.cos(np.pi * Y)) * np.exp(0.5j * np.cos(np.pi * X))
