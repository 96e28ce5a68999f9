from __future__ import annotations

import numpy as np
import pytest

from vortexlab.services.expressions import ExpressionError, compile_expression, constant


def test_evaluates_on_arrays() -> None:
    expr = compile_expression("1 - 0.5*exp(-|x-0.5|^2/0.01)")
    x = np.array([0.5, 0.0])
    y = np.array([0.2, 0.3])
    np.testing.assert_allclose(expr(x, y), [0.5, 1 - 0.5 * np.exp(-25.0)])


def test_constants_and_functions() -> None:
    expr = compile_expression("sin(pi*x) + cos(y) + tanh(0) + e")
    assert expr(0.5, 0.0) == pytest.approx(1.0 + 1.0 + np.e)


def test_constant_expression_broadcasts() -> None:
    X, Y = np.meshgrid(np.linspace(0, 1, 4), np.linspace(0, 1, 3), indexing="ij")
    value = compile_expression("2")(X, Y)
    assert value.shape == (4, 3)
    assert np.all(value == 2.0)
    assert constant(0.0).is_zero


def test_symbolic_derivative() -> None:
    expr = compile_expression("x^2*y + 3*y")
    assert expr.diff("x")(3.0, 2.0) == pytest.approx(12.0)
    assert expr.diff("y")(3.0, 2.0) == pytest.approx(12.0)


@pytest.mark.parametrize("text", ["", "z + 1", "log(x)", "x.__class__", "|x", "sin(x", "x; y", "x @ y"])
def test_rejects_malformed(text: str) -> None:
    with pytest.raises(ExpressionError):
        compile_expression(text)
