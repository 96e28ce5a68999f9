import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import VortexLabError
from ..services.grid import COMPLEX, SCALAR, VECTOR, ComplexField, Grid, ScalarField, VectorField

# 配置日志
logger = logging.getLogger(__name__)

MAGIC = b"VXF1"
HEADER = struct.Struct("<IIIdd")

Field = Union[ScalarField, VectorField, ComplexField]


def encode_field(field: Field) -> bytes:
    """按 VXF1 格式编码场：魔数 + (kind, nx, ny, lx, ly) + 小端 f64 数据"""
    grid = field.grid
    header = MAGIC + HEADER.pack(field.kind, grid.nx, grid.ny, grid.lx, grid.ly)
    if field.kind == COMPLEX:
        # 每个节点交错存放 (re, im)
        payload = np.stack([field.data.real, field.data.imag], axis=-1)
    else:
        # 向量场按分量优先存放
        payload = field.data
    return header + np.ascontiguousarray(payload, dtype="<f8").tobytes()


def decode_field(raw: bytes) -> Field:
    if raw[:4] != MAGIC:
        raise VortexLabError("不是 VXF1 快照文件", {"magic": raw[:4].hex()})
    kind, nx, ny, lx, ly = HEADER.unpack_from(raw, 4)
    grid = Grid(nx, ny, lx, ly)
    count = nx * ny * (1 if kind == SCALAR else 2)
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=4 + HEADER.size).astype(np.float64)
    if kind == SCALAR:
        return ScalarField(grid, values.reshape(nx, ny))
    if kind == VECTOR:
        return VectorField(grid, values.reshape(2, nx, ny))
    if kind == COMPLEX:
        pairs = values.reshape(nx, ny, 2)
        return ComplexField(grid, pairs[..., 0] + 1j * pairs[..., 1])
    raise VortexLabError(f"未知的场类型 {kind}", {"kind": kind})


def read_snapshot(path: Union[str, Path]) -> Field:
    path = Path(path)
    try:
        return decode_field(path.read_bytes())
    except (OSError, struct.error, ValueError) as e:
        logger.error(f"读取快照 {path} 失败: {e}")
        raise VortexLabError(f"读取快照 {path} 失败: {e}", {"path": str(path)}) from e
