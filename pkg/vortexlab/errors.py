from typing import Any, Dict, Optional


class VortexLabError(Exception):
    """所有领域错误的基类，detail 会原样写入命令行的错误 JSON"""

    def __init__(self, message: str, detail: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": type(self).__name__, "message": self.message, "detail": self.detail}


class ConfigError(VortexLabError):
    """运行配置非法（detail["field"] 给出出错字段）"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}", {"field": field})
        self.field = field


class NonConvergence(VortexLabError):
    def __init__(self, problem: str, residual: float, iterations: int):
        super().__init__(
            f"{problem} 迭代未收敛: 相对残差 {residual:.3e}, 迭代 {iterations} 次",
            {"problem": problem, "residual": residual, "iterations": iterations},
        )
        self.residual = residual
        self.iterations = iterations


class CompatibilityViolation(VortexLabError):
    def __init__(self, defect: float, tolerance: float):
        super().__init__(
            f"ψ₀ 的 Neumann 问题不相容: 相对缺陷 {defect:.3e} > {tolerance:.1e}",
            {"defect": defect, "tolerance": tolerance},
        )
        self.defect = defect


class PlacementError(VortexLabError):
    pass


class StepRejected(VortexLabError):
    def __init__(self, t: float, max_modulus: float):
        super().__init__(
            f"t={t:.6g} 时 max|u|={max_modulus:.4g} > 2，时间步被拒绝",
            {"t": t, "max_modulus": max_modulus},
        )


class OutOfDomain(VortexLabError):
    pass


class TrackingAmbiguity(VortexLabError):
    pass


class DegenerateZero(VortexLabError):
    pass


class CountMismatch(VortexLabError):
    pass


class NonMonotoneVerdicts(VortexLabError):
    def __init__(self, lambdas, verdicts):
        super().__init__(
            "约束判定在 λ 网格上不是单次转变",
            {"lambdas": [float(v) for v in lambdas], "verdicts": list(verdicts)},
        )
        self.verdicts = list(verdicts)


class RunLocked(VortexLabError):
    pass
