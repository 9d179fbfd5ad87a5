"""AST for ``.gen`` proposal programs.

Every node is a frozen dataclass, so structural equality is plain ``==``
and programs can be shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

VECTOR = "vector"
SCALAR = "scalar"

VECTOR_INPUTS = ("x0", "x1", "noise")
SCALAR_INPUTS = ("s",)
INPUT_KINDS = {**{n: VECTOR for n in VECTOR_INPUTS}, **{n: SCALAR for n in SCALAR_INPUTS}}


@dataclass(frozen=True)
class VectorVar:
    name: str


@dataclass(frozen=True)
class ScalarVar:
    name: str


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Dot:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Norm2:
    arg: "Expr"


@dataclass(frozen=True)
class Max:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Min:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class RandNormalScalar:
    pass


@dataclass(frozen=True)
class RandUniform:
    lo: float
    hi: float


@dataclass(frozen=True)
class Choice:
    branches: tuple["Expr", ...]


Expr = Union[
    VectorVar, ScalarVar, Const, Add, Sub, Mul, Div, Dot, Norm2, Max, Min,
    RandNormalScalar, RandUniform, Choice,
]

BINARY_OPS = {Add: "+", Sub: "-", Mul: "*", Div: "/"}
CALLS = {Dot: "dot", Norm2: "norm2", Max: "max", Min: "min"}


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Expr


@dataclass(frozen=True)
class GenProgram:
    """A parsed, type-checked program.

    ``source_text`` is kept for diagnostics and persistence but is excluded
    from equality: two programs are equal when their ASTs are.
    """

    statements: tuple[Assign, ...]
    result: Expr
    source_text: str = ""

    def __eq__(self, other):
        if not isinstance(other, GenProgram):
            return NotImplemented
        return self.statements == other.statements and self.result == other.result

    def __hash__(self):
        return hash((self.statements, self.result))

    def node_count(self) -> int:
        return sum(1 for st in self.statements for _ in walk(st.expr)) + sum(1 for _ in walk(self.result))


def children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, (Add, Sub, Mul, Div, Dot, Max, Min)):
        return (expr.left, expr.right)
    if isinstance(expr, Norm2):
        return (expr.arg,)
    if isinstance(expr, Choice):
        return expr.branches
    return ()


def walk(expr: Expr) -> Iterator[Expr]:
    """Pre-order traversal."""
    yield expr
    for child in children(expr):
        yield from walk(child)


def rebuild(expr: Expr, new_children: tuple[Expr, ...]) -> Expr:
    if isinstance(expr, Norm2):
        return Norm2(*new_children)
    if isinstance(expr, Choice):
        return Choice(tuple(new_children))
    if new_children:
        return type(expr)(*new_children)
    return expr
