import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np
import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

# 配置日志
logger = logging.getLogger(__name__)

X, Y = sympy.symbols("x y", real=True)

ALLOWED_FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "exp": sympy.exp,
    "tanh": sympy.tanh,
    "Abs": sympy.Abs,
}
LOCAL_NAMES = {"x": X, "y": Y, "pi": sympy.pi, "e": sympy.E, **ALLOWED_FUNCTIONS}

_ALLOWED_CHARS = re.compile(r"^[0-9A-Za-z_+\-*/^().,|\s]*$")
_ABS_BARS = re.compile(r"\|([^|]*)\|")
_TRANSFORMATIONS = standard_transformations + (convert_xor,)


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Expression:
    """(x, y) 上的闭式表达式：保留 sympy 形式以便求导，数值求值走 numpy"""

    text: str
    expr: sympy.Expr

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        value = _lambdify(self.expr)(x, y)
        return np.broadcast_to(np.asarray(value, dtype=float), np.broadcast(x, y).shape).copy()

    def diff(self, var: str) -> "Expression":
        symbol = X if var == "x" else Y
        derivative = sympy.diff(self.expr, symbol)
        return Expression(f"d({self.text})/d{var}", derivative)

    @property
    def is_zero(self) -> bool:
        return self.expr == 0


_LAMBDA_CACHE: Dict[sympy.Expr, Callable] = {}


def _lambdify(expr: sympy.Expr) -> Callable:
    fn = _LAMBDA_CACHE.get(expr)
    if fn is None:
        fn = sympy.lambdify((X, Y), expr, modules="numpy")
        _LAMBDA_CACHE[expr] = fn
    return fn


def _replace_abs_bars(text: str) -> str:
    previous = None
    while previous != text:
        previous = text
        text = _ABS_BARS.sub(r"Abs(\1)", text)
    if "|" in text:
        raise ExpressionError("绝对值竖线不成对")
    return text


def compile_expression(text: str) -> Expression:
    """编译形如 "1 - 0.5*exp(-|x-0.5|^2/0.01)" 的表达式；只允许 x, y, pi, e 与白名单函数"""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("表达式为空")
    if not _ALLOWED_CHARS.match(text) or "__" in text:
        raise ExpressionError(f"表达式含有非法字符: {text!r}")

    source = _replace_abs_bars(text)
    try:
        expr = parse_expr(source, local_dict=dict(LOCAL_NAMES), transformations=_TRANSFORMATIONS)
    except Exception as e:
        raise ExpressionError(f"无法解析表达式 {text!r}: {e}") from e

    if not isinstance(expr, sympy.Expr):
        raise ExpressionError(f"表达式 {text!r} 不是标量表达式")
    unknown = expr.free_symbols - {X, Y}
    if unknown:
        names = ", ".join(sorted(str(s) for s in unknown))
        raise ExpressionError(f"表达式 {text!r} 含有未知变量: {names}")
    allowed = set(ALLOWED_FUNCTIONS.values())
    for call in expr.atoms(sympy.Function):
        if call.func not in allowed:
            raise ExpressionError(f"表达式 {text!r} 使用了不允许的函数 {call.func}")
    if expr.is_real is False:
        raise ExpressionError(f"表达式 {text!r} 不是实值")

    logger.debug(f"编译表达式 {text!r} -> {expr}")
    return Expression(text, expr)


def constant(value: float) -> Expression:
    return Expression(repr(float(value)), sympy.Float(value))
