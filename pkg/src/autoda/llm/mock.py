"""Deterministic offline stand-in for the LLM generator.

It never touches the network. All randomness is derived from
``(seed, candidate_id, attempt, role)``, so the generator holds no state and
an interrupted evolution run resumes exactly.
"""

from __future__ import annotations

import numpy as np

from ..dsl import INITIAL_SOURCE, GenProgram, ParseError, parse, pretty_print
from ..dsl.nodes import (
    INPUT_KINDS, SCALAR, VECTOR, Assign, Const, Expr, Mul, RandUniform, ScalarVar, VectorVar,
    children, rebuild, walk,
)
from ..dsl.parser import infer_kind

BANK = (
    INITIAL_SOURCE,
    "return x1 + s * noise\n",
    "d = x0 - x1\nreturn x1 + 0.1 * s * d + s * noise\n",
    "d = x0 - x1\nn = norm2(d)\nreturn x1 + s * d / n + 0.5 * s * noise\n",
    "d = x0 - x1\nstep = s * 0.05\nreturn x1 + step * d + step * noise\n",
    "u = noise / norm2(noise)\nd = x0 - x1\nreturn x1 + s * norm2(d) * u + 0.01 * d\n",
    "d = x0 - x1\np = noise - dot(noise, d) / dot(d, d) * d\nreturn x1 + s * p + 0.02 * s * d\n",
    "m = 0.5 * (x0 + x1)\nreturn m + s * noise\n",
    "k = rand(0.5, 1.5)\nd = x0 - x1\nreturn x1 + k * s * d + s * noise\n",
    "d = x0 - x1\nreturn choice(x1 + s * d; x1 + s * noise; x1 + s * (d + noise))\n",
    "d = x0 - x1\nr = randn()\nreturn x1 + 0.2 * s * d + r * s * noise\n",
    "d = x0 - x1\nn = max(norm2(d), norm2(noise))\nreturn x1 + s * d / n + s * noise / n\n",
)

_ROLE_CODE = {"init": 0, "crossover": 1, "mutation": 2}


def _map_vars(expr: Expr, fn) -> Expr:
    if isinstance(expr, (VectorVar, ScalarVar)):
        return fn(expr)
    kids = children(expr)
    if not kids:
        return expr
    return rebuild(expr, tuple(_map_vars(k, fn) for k in kids))


def _replace_nth(expr: Expr, pred, n: int, fn, counter: list[int]) -> Expr:
    """Replace the n-th pre-order node satisfying ``pred`` with ``fn(node)``."""
    if pred(expr):
        if counter[0] == n:
            counter[0] += 1
            return fn(expr)
        counter[0] += 1
    kids = children(expr)
    if not kids:
        return expr
    return rebuild(expr, tuple(_replace_nth(k, pred, n, fn, counter) for k in kids))


def _count(program: GenProgram, pred) -> int:
    exprs = [st.expr for st in program.statements] + [program.result]
    return sum(1 for e in exprs for node in walk(e) if pred(node))


def _rewrite_nth(program: GenProgram, pred, n: int, fn) -> GenProgram:
    counter = [0]
    statements = tuple(Assign(st.name, _replace_nth(st.expr, pred, n, fn, counter)) for st in program.statements)
    result = _replace_nth(program.result, pred, n, fn, counter)
    return GenProgram(statements, result)


def splice(a: GenProgram, b: GenProgram, k: int) -> GenProgram:
    """First ``k`` statements of ``a`` followed by ``b`` from statement ``k`` on.

    References in the tail that no longer resolve to a name of the right
    kind are re-bound to ``x1`` (vectors) or ``s`` (scalars); names the tail
    assigns that clash with the head are renamed.
    """
    env = dict(INPUT_KINDS)
    out = []
    for st in a.statements[:k]:
        env[st.name] = infer_kind(st.expr, env)
        out.append(st)

    b_env = dict(INPUT_KINDS)
    for st in b.statements:
        b_env[st.name] = infer_kind(st.expr, b_env)

    rename: dict[str, str] = {}

    def fix(var):
        want = VECTOR if isinstance(var, VectorVar) else SCALAR
        name = rename.get(var.name, var.name)
        if env.get(name) == want:
            return type(var)(name)
        return VectorVar("x1") if want == VECTOR else ScalarVar("s")

    for st in b.statements[k:]:
        expr = _map_vars(st.expr, fix)
        name = st.name
        if name in env:
            i = 2
            while f"{st.name}_{i}" in env or f"{st.name}_{i}" in b_env:
                i += 1
            name = f"{st.name}_{i}"
        rename[st.name] = name
        env[name] = infer_kind(expr, env)
        out.append(Assign(name, expr))
    result = _map_vars(b.result, fix)
    return GenProgram(tuple(out), result)


class MockGenerator:
    """Bank-cycling initializer, splicing crossover, constant-jitter mutation."""

    bank = BANK

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _rng(self, context) -> np.random.Generator:
        return np.random.default_rng([self.seed, context.candidate_id, context.attempt, _ROLE_CODE[context.role]])

    def _fallback(self, context) -> GenProgram:
        return parse(self.bank[context.candidate_id % len(self.bank)])

    def _parse_or(self, source: str) -> GenProgram | None:
        try:
            return parse(source)
        except ParseError:
            return None

    def init_program(self, context) -> str:
        return self.bank[context.candidate_id % len(self.bank)]

    def crossover(self, parent_a: str, parent_b: str, context) -> str:
        a, b = self._parse_or(parent_a), self._parse_or(parent_b)
        if a is None and b is None:
            return pretty_print(self._fallback(context))
        a, b = a or b, b or a
        rng = self._rng(context)
        k = int(rng.integers(0, min(len(a.statements), len(b.statements)) + 1))
        return pretty_print(splice(a, b, k))

    def mutate(self, parent: str, context) -> str:
        prog = self._parse_or(parent) or self._fallback(context)
        rng = self._rng(context)
        factor = float(rng.uniform(0.9, 1.1))

        def is_const(node):
            return isinstance(node, Const)

        def is_uniform(node):
            return isinstance(node, RandUniform)

        def is_step(node):
            return isinstance(node, ScalarVar) and node.name == "s"

        for pred, fn in (
            (is_const, lambda node: Const(node.value * factor)),
            (is_uniform, lambda node: RandUniform(node.lo * factor, node.hi * factor)),
            (is_step, lambda node: Mul(Const(factor), node)),
        ):
            n = _count(prog, pred)
            if n:
                prog = _rewrite_nth(prog, pred, int(rng.integers(n)), fn)
                break
        return pretty_print(prog)


def mock_generator(seed: int = 0) -> MockGenerator:
    return MockGenerator(seed)
