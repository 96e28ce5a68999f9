import csv
import io
import json
import logging
import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Union

import numpy as np

from .. import __version__
from ..errors import RunLocked, VortexLabError
from ..services.vortexometry import Trajectory
from .snapshot import Field, encode_field

# 配置日志
logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("id", "degree", "t", "x", "y")


def format_float(value: Any) -> str:
    """CSV 中的浮点数统一保留 17 位有效数字"""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"无法序列化类型 {type(value).__name__}")


def _clean(value: Any) -> Any:
    """JSON 不支持 inf/nan，统一转成字符串"""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


class RunStorage:
    """运行输出目录管理器：原子写入 JSON/CSV/VXF1，并用锁文件保证单命令独占"""

    def __init__(self, out_dir: Union[str, Path], config_hash: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.lock_file = self.out_dir / ".lock"

    # ===== 锁 =====
    @contextmanager
    def lock(self) -> Iterator["RunStorage"]:
        try:
            fd = os.open(self.lock_file, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise RunLocked(f"输出目录 {self.out_dir} 正被另一个命令使用", {"lock": str(self.lock_file)}) from e
        try:
            os.write(fd, str(os.getpid()).encode("ascii"))
            os.close(fd)
            yield self
        finally:
            try:
                self.lock_file.unlink()
            except FileNotFoundError:
                pass

    # ===== 原子写入 =====
    def _write_bytes(self, name: str, data: bytes) -> Path:
        target = self.out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, target)
        except Exception as e:
            logger.error(f"保存文件 {target} 失败: {e}")
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        logger.debug(f"已写入 {target}")
        return target

    def write_json(self, name: str, results: Any) -> Path:
        envelope = {"config_hash": self.config_hash, "version": __version__, "results": _clean(results)}
        text = json.dumps(envelope, ensure_ascii=False, indent=2, default=_json_default)
        return self._write_bytes(name, text.encode("utf-8"))

    def write_csv(self, name: str, rows: Sequence[Mapping[str, Any]], columns: Optional[Sequence[str]] = None) -> Path:
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_float(row.get(c, "")) for c in columns])
        return self._write_bytes(name, buffer.getvalue().encode("utf-8"))

    def write_snapshot(self, name: str, field: Field) -> Path:
        return self._write_bytes(name, encode_field(field))

    def write_text(self, name: str, text: str) -> Path:
        return self._write_bytes(name, text.encode("utf-8"))

    # ===== 轨迹 =====
    def write_trajectories(self, name: str, trajectories: Sequence[Trajectory]) -> Path:
        """轨迹 CSV (id, degree, t, x, y)，终止原因另存为同名 .terminations.json"""
        rows = []
        for tr in trajectories:
            for t, (x, y) in zip(tr.times, tr.positions):
                rows.append({"id": tr.id, "degree": tr.degree, "t": t, "x": x, "y": y})
        path = self.write_csv(name, rows, TRAJECTORY_COLUMNS)
        terminations = {
            str(tr.id): {"termination": tr.termination, "t_end": tr.t_end} for tr in trajectories
        }
        self.write_json(_terminations_name(name), terminations)
        return path

    def read_json(self, name: str) -> Dict[str, Any]:
        return read_json(self.out_dir / name)


def _terminations_name(name: str) -> str:
    return str(Path(name).with_suffix("")) + ".terminations.json"


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"加载文件 {path} 失败: {e}")
        raise VortexLabError(f"加载文件 {path} 失败: {e}", {"path": str(path)}) from e


def read_trajectories(path: Union[str, Path]) -> List[Trajectory]:
    """读取轨迹 CSV；旁边若有 .terminations.json 则恢复终止原因"""
    path = Path(path)
    tracks: Dict[int, Trajectory] = {}
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            missing = set(TRAJECTORY_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise VortexLabError(f"轨迹文件 {path} 缺少列 {sorted(missing)}", {"path": str(path)})
            for row in reader:
                tid = int(row["id"])
                tr = tracks.setdefault(tid, Trajectory(id=tid, degree=int(row["degree"])))
                tr.append(float(row["t"]), (float(row["x"]), float(row["y"])))
    except (OSError, ValueError, KeyError) as e:
        raise VortexLabError(f"读取轨迹 {path} 失败: {e}", {"path": str(path)}) from e

    side = path.parent / Path(_terminations_name(path.name)).name
    if side.exists():
        terminations = read_json(side).get("results", {})
        for tid, info in terminations.items():
            tr = tracks.get(int(tid))
            if tr is not None and info.get("termination") is not None:
                tr.close(info["termination"], info["t_end"])
    for tr in tracks.values():
        if tr.open and tr.times:
            tr.close("horizon", tr.times[-1])
    return [tracks[k] for k in sorted(tracks)]
