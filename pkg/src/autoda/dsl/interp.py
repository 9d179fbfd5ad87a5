"""Evaluation of ``.gen`` programs.

Programs are compiled once into nested closures; each call then walks the
statements top to bottom. Random draws come from ``ctx.rng`` in source
order (left operand before right, statement before statement). A
``choice`` draws its branch index first and evaluates only that branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite
from typing import Callable

import numpy as np

from ..core import AttackError
from .nodes import (
    Add, Choice, Const, Div, Dot, Expr, GenProgram, Max, Min, Mul, Norm2,
    RandNormalScalar, RandUniform, ScalarVar, Sub, VectorVar,
)


class NumericError(AttackError, ArithmeticError):
    """A program produced NaN/Inf or divided by zero."""


@dataclass
class EvalContext:
    x0: np.ndarray
    x1: np.ndarray
    noise: np.ndarray
    s: float
    rng: np.random.Generator

    def __post_init__(self):
        if self.x0.shape != self.x1.shape or self.noise.shape != self.x0.shape:
            raise ValueError(f"inconsistent shapes {self.x0.shape}, {self.x1.shape}, {self.noise.shape}")


Env = dict
Node = Callable[[Env, np.random.Generator], object]


def _finite(value, what: str):
    # vectors are checked once, on the result: NaN/Inf components can only
    # vanish through dot/norm2, whose scalar outputs are checked here
    if isinstance(value, float):
        if not isfinite(value):
            raise NumericError(f"{what} produced {value}")
    elif not isinstance(value, np.ndarray):
        raise TypeError(f"unexpected value {value!r}")
    return value


def _finite_vector(value: np.ndarray) -> np.ndarray:
    if not np.isfinite(value).all():
        raise NumericError("result has a non-finite component")
    return value


def _compile(expr: Expr) -> Node:
    if isinstance(expr, (VectorVar, ScalarVar)):
        name = expr.name
        return lambda env, rng: env[name]
    if isinstance(expr, Const):
        value = float(expr.value)
        return lambda env, rng: value
    if isinstance(expr, RandNormalScalar):
        return lambda env, rng: float(rng.standard_normal())
    if isinstance(expr, RandUniform):
        lo, hi = float(expr.lo), float(expr.hi)
        return lambda env, rng: float(rng.uniform(lo, hi))
    if isinstance(expr, Norm2):
        arg = _compile(expr.arg)
        return lambda env, rng: _finite(float(np.linalg.norm(arg(env, rng).ravel())), "norm2")
    if isinstance(expr, Choice):
        branches = [_compile(b) for b in expr.branches]
        n = len(branches)
        return lambda env, rng: branches[int(rng.integers(n))](env, rng)

    left, right = _compile(expr.left), _compile(expr.right)
    if isinstance(expr, Add):
        return lambda env, rng: _finite(left(env, rng) + right(env, rng), "addition")
    if isinstance(expr, Sub):
        return lambda env, rng: _finite(left(env, rng) - right(env, rng), "subtraction")
    if isinstance(expr, Mul):
        return lambda env, rng: _finite(left(env, rng) * right(env, rng), "multiplication")
    if isinstance(expr, Div):
        def div(env, rng):
            num = left(env, rng)
            den = right(env, rng)
            if den == 0.0:
                raise NumericError("division by zero")
            return _finite(num / den, "division")
        return div
    if isinstance(expr, Dot):
        return lambda env, rng: _finite(float(np.dot(left(env, rng).ravel(), right(env, rng).ravel())), "dot")
    if isinstance(expr, Max):
        return lambda env, rng: max(left(env, rng), right(env, rng))
    if isinstance(expr, Min):
        return lambda env, rng: min(left(env, rng), right(env, rng))
    raise TypeError(f"cannot compile {type(expr).__name__}")


class CompiledProgram:
    """A program ready for repeated evaluation."""

    def __init__(self, program: GenProgram):
        self.program = program
        self._steps = [(st.name, _compile(st.expr)) for st in program.statements]
        self._result = _compile(program.result)

    def __call__(self, ctx: EvalContext) -> np.ndarray:
        env = {"x0": ctx.x0, "x1": ctx.x1, "noise": ctx.noise, "s": float(ctx.s)}
        rng = ctx.rng
        with np.errstate(all="ignore"):
            for name, fn in self._steps:
                env[name] = fn(env, rng)
            out = self._result(env, rng)
        return _finite_vector(np.asarray(out, dtype=np.float64))


def evaluate(program: GenProgram, ctx: EvalContext) -> np.ndarray:
    """Run ``program`` once. The result is not clamped to [0, 1]."""
    return CompiledProgram(program)(ctx)
