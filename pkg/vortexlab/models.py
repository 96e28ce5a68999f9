import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .errors import ConfigError
from .services.expressions import ExpressionError, compile_expression

Point = Tuple[float, float]


def _check_expression(value: str) -> str:
    try:
        compile_expression(value)
    except ExpressionError as e:
        raise ValueError(str(e)) from e
    return value


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ===== 运行配置 =====
class DomainConfig(StrictModel):
    lx: float = Field(1.0, gt=0)
    ly: float = Field(1.0, gt=0)
    nx: int = Field(64, ge=16)
    ny: int = Field(64, ge=16)


class ParamsConfig(StrictModel):
    alpha: float = Field(1.0, gt=0)
    beta: float = 0.0
    sigma: float = Field(1.0, gt=0)
    eps: float = Field(0.05, gt=0, lt=0.5)
    lam: float = Field(1.0, ge=0)

    @field_validator("eps")
    @classmethod
    def eps_regime(cls, v: float) -> float:
        if abs(math.log(v)) < 1.0:
            raise ValueError("要求 |log ε| ≥ 1")
        return v


class WellConfig(StrictModel):
    center: Point
    depth: float = Field(0.5, gt=0, lt=1)
    width: float = Field(0.1, gt=0)


class LandscapeConfig(StrictModel):
    kind: Literal["constant", "gaussian_well", "multi_well", "sampled", "expression"] = "constant"
    value: float = Field(1.0, gt=0)
    wells: List[WellConfig] = Field(default_factory=list)
    expression: Optional[str] = None
    path: Optional[str] = None

    @field_validator("expression")
    @classmethod
    def compile_b(cls, v: Optional[str]) -> Optional[str]:
        return None if v is None else _check_expression(v)

    @model_validator(mode="after")
    def kind_requirements(self) -> "LandscapeConfig":
        if self.kind == "gaussian_well" and len(self.wells) != 1:
            raise ValueError("gaussian_well 需要恰好一个 wells 条目")
        if self.kind == "multi_well" and not self.wells:
            raise ValueError("multi_well 至少需要一个 wells 条目")
        if self.kind == "expression" and self.expression is None:
            raise ValueError("expression 类型需要给出 expression")
        if self.kind == "sampled" and self.path is None:
            raise ValueError("sampled 类型需要给出 VXF1 文件路径 path")
        return self


class BoundaryConfig(StrictModel):
    H: str = "0"
    J: Tuple[str, str] = ("0", "0")
    I: Optional[Tuple[str, str]] = None

    @field_validator("H")
    @classmethod
    def compile_H(cls, v: str) -> str:
        return _check_expression(v)

    @field_validator("J", "I")
    @classmethod
    def compile_vector(cls, v):
        if v is None:
            return v
        return tuple(_check_expression(item) for item in v)


class ForcingConfig(StrictModel):
    mode: Literal["auxiliary", "prescribed"] = "auxiliary"
    Z: Tuple[str, str] = ("0", "0")
    f: str = "0"

    @field_validator("Z")
    @classmethod
    def compile_Z(cls, v):
        return tuple(_check_expression(item) for item in v)

    @field_validator("f")
    @classmethod
    def compile_f(cls, v: str) -> str:
        return _check_expression(v)


class VortexConfig(StrictModel):
    position: Point
    degree: Literal[-1, 1] = 1


class TimeConfig(StrictModel):
    dt: Optional[float] = Field(None, gt=0)
    horizon: float = Field(0.5, gt=0)
    snapshot_every: int = Field(0, ge=0)
    diagnostics_every: int = Field(10, ge=1)


class LawConfig(StrictModel):
    dt: float = Field(1e-3, gt=0)
    horizon: Optional[float] = Field(None, gt=0)
    form: Literal["solved", "potential", "pinning_only"] = "solved"
    landscape: Literal["closed_form", "gridded"] = "closed_form"


class CriticalConfig(StrictModel):
    lambdas: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    minima: Optional[List[Point]] = None
    radius: float = Field(0.1, gt=0)
    horizon: float = Field(3.0, gt=0)
    dt: float = Field(1e-2, gt=0)
    tolerance: Optional[float] = Field(None, gt=0)

    @field_validator("lambdas")
    @classmethod
    def nondecreasing(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("λ 网格不能为空")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("λ 网格必须单调不减")
        if any(x < 0 for x in v):
            raise ValueError("λ 必须非负")
        return v


class CompareConfig(StrictModel):
    eps_values: List[float] = Field(default_factory=lambda: [0.08, 0.04, 0.02])
    pde_trajectories: Optional[str] = None
    ode_trajectories: Optional[str] = None
    plots: bool = True

    @field_validator("eps_values")
    @classmethod
    def eps_range(cls, v: List[float]) -> List[float]:
        for eps in v:
            if not 0 < eps < 0.5 or abs(math.log(eps)) < 1.0:
                raise ValueError(f"ε = {eps} 不在 (0, 1/e] 内")
        return v


class ConvergenceConfig(StrictModel):
    selectors: List[Literal["grid", "elliptic", "identity", "rk4", "imex"]] = Field(
        default_factory=lambda: ["grid", "elliptic", "identity", "rk4", "imex"]
    )
    ladder: List[int] = Field(default_factory=lambda: [33, 65, 129])
    dt_ladder: List[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025])

    @field_validator("ladder", "dt_ladder")
    @classmethod
    def at_least_three(cls, v):
        if len(v) < 3:
            raise ValueError("细化阶梯至少需要 3 级")
        return v


class FieldsConfig(StrictModel):
    identity_tolerance: float = Field(1e-3, gt=0)


class RunConfig(StrictModel):
    version: str = "1"
    domain: DomainConfig = Field(default_factory=DomainConfig)
    params: ParamsConfig = Field(default_factory=ParamsConfig)
    flavor: Literal["forced_gl", "pinned_gl"] = "forced_gl"
    landscape: LandscapeConfig = Field(default_factory=LandscapeConfig)
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    forcing: ForcingConfig = Field(default_factory=ForcingConfig)
    vortices: List[VortexConfig] = Field(default_factory=list)
    time: TimeConfig = Field(default_factory=TimeConfig)
    law: LawConfig = Field(default_factory=LawConfig)
    critical: CriticalConfig = Field(default_factory=CriticalConfig)
    compare: CompareConfig = Field(default_factory=CompareConfig)
    convergence: ConvergenceConfig = Field(default_factory=ConvergenceConfig)
    auxiliary: FieldsConfig = Field(default_factory=FieldsConfig)
    output: Optional[str] = None
    seed: int = 0

    def config_hash(self) -> str:
        """规范 JSON（键排序、紧凑分隔符）的 SHA-256"""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @property
    def positions(self) -> List[Point]:
        return [v.position for v in self.vortices]

    @property
    def degrees(self) -> List[int]:
        return [v.degree for v in self.vortices]


def _dotted(loc: Tuple[Union[str, int], ...]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_dotted(first["loc"]), first["msg"]) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError("<file>", f"无法读取配置 {path}: {e}") from e
    return parse_run_config(data)


# ===== 报告 =====
class ReportRow(BaseModel):
    config_hash: str
    case: Dict[str, Any]
    metrics: Dict[str, Any]
    passed: Optional[bool] = None


class StudyReport(BaseModel):
    kind: str
    version: str = __version__
    config_hash: str
    rows: List[ReportRow] = Field(default_factory=list)
    verdicts: Dict[str, bool] = Field(default_factory=dict)

    def add(self, case: Dict[str, Any], metrics: Dict[str, Any], passed: Optional[bool] = None) -> ReportRow:
        row = ReportRow(config_hash=self.config_hash, case=case, metrics=metrics, passed=passed)
        self.rows.append(row)
        return row

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values()) and all(r.passed is not False for r in self.rows)
