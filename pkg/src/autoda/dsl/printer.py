"""Canonical source form for programs.

Every binary operation is parenthesized and constants print via ``repr``,
so ``parse(pretty_print(p)) == p`` holds for any valid program.
"""

from __future__ import annotations

from .nodes import (
    BINARY_OPS, CALLS, Choice, Const, Expr, GenProgram, Norm2, RandNormalScalar,
    RandUniform, ScalarVar, VectorVar,
)


def _num(value: float) -> str:
    return repr(float(value))


def format_expr(expr: Expr) -> str:
    if isinstance(expr, (VectorVar, ScalarVar)):
        return expr.name
    if isinstance(expr, Const):
        return _num(expr.value)
    op = BINARY_OPS.get(type(expr))
    if op is not None:
        return f"({format_expr(expr.left)} {op} {format_expr(expr.right)})"
    if isinstance(expr, Norm2):
        return f"norm2({format_expr(expr.arg)})"
    fn = CALLS.get(type(expr))
    if fn is not None:
        return f"{fn}({format_expr(expr.left)}, {format_expr(expr.right)})"
    if isinstance(expr, RandNormalScalar):
        return "randn()"
    if isinstance(expr, RandUniform):
        return f"rand({_num(expr.lo)}, {_num(expr.hi)})"
    if isinstance(expr, Choice):
        return "choice(" + "; ".join(format_expr(b) for b in expr.branches) + ")"
    raise TypeError(f"cannot format {type(expr).__name__}")


def pretty_print(program: GenProgram) -> str:
    lines = [f"{st.name} = {format_expr(st.expr)}" for st in program.statements]
    lines.append(f"return {format_expr(program.result)}")
    return "\n".join(lines) + "\n"
