"""Parser and kind checker for ``.gen`` programs.

Grammar (one statement per line, ``#`` starts a comment)::

    program   := { NAME "=" expr NEWLINE } "return" expr
    expr      := term { ("+" | "-") term }
    term      := unary { ("*" | "/") unary }
    unary     := "-" unary | primary
    primary   := NUMBER | NAME | call | "(" expr ")"
    call      := dot(e, e) | norm2(e) | max(e, e) | min(e, e)
               | randn() | rand(NUMBER, NUMBER) | choice(e; e; ...)

Newlines inside parentheses are ignored, so long expressions may wrap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..core import AttackError
from .nodes import (
    INPUT_KINDS, SCALAR, VECTOR, Add, Assign, Choice, Const, Div, Dot, Expr, GenProgram,
    Max, Min, Mul, Norm2, RandNormalScalar, RandUniform, ScalarVar, Sub, VectorVar,
)

RESERVED = frozenset({"return", "dot", "norm2", "max", "min", "randn", "rand", "choice"})


class ParseError(AttackError):
    """Any failure to turn source text into a valid program."""


class GenSyntaxError(ParseError):
    def __init__(self, line: int, col: int, message: str):
        self.line, self.col, self.message = line, col, message
        super().__init__(f"line {line}, col {col}: {message}")


class GenTypeError(ParseError):
    def __init__(self, path: str, expected: str, message: str = ""):
        self.path, self.expected = path, expected
        super().__init__(f"{path}: expected {expected}" + (f" ({message})" if message else ""))


class UnboundIdentifier(ParseError):
    def __init__(self, name: str, line: int = 0, col: int = 0):
        self.name, self.line, self.col = name, line, col
        super().__init__(f"unbound identifier {name!r} at line {line}, col {col}")


@dataclass
class Token:
    kind: str  # NUM, NAME, OP, NL, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/()=,;])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, depth, pos = 1, 0, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise GenSyntaxError(line, col, f"unexpected character {source[pos]!r}")
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            if depth == 0:
                tokens.append(Token("NL", text, line, col))
            line += 1
            line_start = m.end()
        elif kind == "num":
            tokens.append(Token("NUM", text, line, col))
        elif kind == "name":
            tokens.append(Token("NAME", text, line, col))
        elif kind == "op":
            if text == "(":
                depth += 1
            elif text == ")":
                depth = max(depth - 1, 0)
            tokens.append(Token("OP", text, line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


def _finite(t: Token) -> float:
    value = float(t.text)
    if value == float("inf"):
        raise GenSyntaxError(t.line, t.col, f"numeric literal {t.text} overflows")
    return value


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0
        self.env: dict[str, str] = dict(INPUT_KINDS)

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = repr(text) if text is not None else kind
            got = repr(t.text) if t.text else t.kind
            raise GenSyntaxError(t.line, t.col, f"expected {want}, got {got}")
        return self.advance()

    def skip_newlines(self):
        while self.tok.kind == "NL":
            self.advance()

    def program(self, source: str) -> GenProgram:
        statements: list[Assign] = []
        self.skip_newlines()
        while not (self.tok.kind == "NAME" and self.tok.text == "return"):
            if self.tok.kind == "EOF":
                raise GenSyntaxError(self.tok.line, self.tok.col, "missing 'return' statement")
            statements.append(self.assignment(len(statements) + 1))
            self.end_of_line()
        self.advance()
        result = self.expr()
        self.end_of_line()
        self.skip_newlines()
        if self.tok.kind != "EOF":
            raise GenSyntaxError(self.tok.line, self.tok.col, "statements after 'return'")
        check_kind(result, self.env, "return", VECTOR)
        return GenProgram(tuple(statements), result, source)

    def end_of_line(self):
        if self.tok.kind not in ("NL", "EOF"):
            raise GenSyntaxError(self.tok.line, self.tok.col, f"unexpected {self.tok.text!r}")
        self.skip_newlines()

    def assignment(self, index: int) -> Assign:
        name_tok = self.expect("NAME")
        name = name_tok.text
        if name in RESERVED:
            raise GenSyntaxError(name_tok.line, name_tok.col, f"{name!r} is reserved")
        if name in INPUT_KINDS:
            raise GenSyntaxError(name_tok.line, name_tok.col, f"cannot assign to input {name!r}")
        if name in self.env:
            raise GenSyntaxError(name_tok.line, name_tok.col, f"{name!r} is already assigned")
        self.expect("OP", "=")
        expr = self.expr()
        self.env[name] = infer_kind(expr, self.env, f"statement {index} ({name})")
        return Assign(name, expr)

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "OP" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "OP" and self.tok.text in "*/":
            op = self.advance().text
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "OP" and self.tok.text == "-":
            self.advance()
            if self.tok.kind == "NUM":
                return Const(-_finite(self.advance()))
            return Mul(Const(-1.0), self.unary())
        return self.primary()

    def number(self) -> float:
        sign = 1.0
        if self.tok.kind == "OP" and self.tok.text == "-":
            self.advance()
            sign = -1.0
        return sign * _finite(self.expect("NUM"))

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "NUM":
            self.advance()
            return Const(_finite(t))
        if t.kind == "OP" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect("OP", ")")
            return node
        if t.kind == "NAME":
            self.advance()
            if self.tok.kind == "OP" and self.tok.text == "(":
                return self.call(t)
            if t.text in RESERVED:
                raise GenSyntaxError(t.line, t.col, f"{t.text!r} is not a variable")
            kind = self.env.get(t.text)
            if kind is None:
                raise UnboundIdentifier(t.text, t.line, t.col)
            return VectorVar(t.text) if kind == VECTOR else ScalarVar(t.text)
        got = repr(t.text) if t.text else t.kind
        raise GenSyntaxError(t.line, t.col, f"unexpected {got}")

    def call(self, name_tok: Token) -> Expr:
        fn = name_tok.text
        self.expect("OP", "(")
        if fn == "randn":
            self.expect("OP", ")")
            return RandNormalScalar()
        if fn == "rand":
            lo = self.number()
            self.expect("OP", ",")
            hi = self.number()
            self.expect("OP", ")")
            return RandUniform(lo, hi)
        if fn == "choice":
            branches = [self.expr()]
            while self.tok.kind == "OP" and self.tok.text == ";":
                self.advance()
                branches.append(self.expr())
            self.expect("OP", ")")
            if len(branches) < 2:
                raise GenSyntaxError(name_tok.line, name_tok.col, "choice needs at least two branches")
            return Choice(tuple(branches))
        arity = {"dot": 2, "norm2": 1, "max": 2, "min": 2}.get(fn)
        if arity is None:
            raise GenSyntaxError(name_tok.line, name_tok.col, f"unknown function {fn!r}")
        args = [self.expr()]
        while self.tok.kind == "OP" and self.tok.text == ",":
            self.advance()
            args.append(self.expr())
        self.expect("OP", ")")
        if len(args) != arity:
            raise GenSyntaxError(name_tok.line, name_tok.col, f"{fn}() takes {arity} argument(s), got {len(args)}")
        return {"dot": Dot, "norm2": Norm2, "max": Max, "min": Min}[fn](*args)


def infer_kind(expr: Expr, env: dict[str, str], path: str = "expr") -> str:
    """Return VECTOR or SCALAR for ``expr``; raise GenTypeError if ill-kinded."""
    if isinstance(expr, (VectorVar, ScalarVar)) and expr.name not in env:
        raise UnboundIdentifier(expr.name)
    if isinstance(expr, VectorVar):
        if env.get(expr.name) != VECTOR:
            raise GenTypeError(f"{path} > {expr.name}", VECTOR)
        return VECTOR
    if isinstance(expr, ScalarVar):
        if env.get(expr.name) != SCALAR:
            raise GenTypeError(f"{path} > {expr.name}", SCALAR)
        return SCALAR
    if isinstance(expr, (Const, RandNormalScalar, RandUniform)):
        return SCALAR
    if isinstance(expr, (Add, Sub, Mul)):
        lk = infer_kind(expr.left, env, f"{path} > {type(expr).__name__.lower()}[0]")
        rk = infer_kind(expr.right, env, f"{path} > {type(expr).__name__.lower()}[1]")
        return VECTOR if VECTOR in (lk, rk) else SCALAR
    if isinstance(expr, Div):
        lk = infer_kind(expr.left, env, f"{path} > div[0]")
        check_kind(expr.right, env, f"{path} > div[1]", SCALAR)
        return lk
    if isinstance(expr, Dot):
        check_kind(expr.left, env, f"{path} > dot[0]", VECTOR)
        check_kind(expr.right, env, f"{path} > dot[1]", VECTOR)
        return SCALAR
    if isinstance(expr, Norm2):
        check_kind(expr.arg, env, f"{path} > norm2[0]", VECTOR)
        return SCALAR
    if isinstance(expr, (Max, Min)):
        name = type(expr).__name__.lower()
        check_kind(expr.left, env, f"{path} > {name}[0]", SCALAR)
        check_kind(expr.right, env, f"{path} > {name}[1]", SCALAR)
        return SCALAR
    if isinstance(expr, Choice):
        kinds = {infer_kind(b, env, f"{path} > choice[{i}]") for i, b in enumerate(expr.branches)}
        if len(kinds) != 1:
            raise GenTypeError(f"{path} > choice", "branches of one kind", "mixed scalar and vector branches")
        return kinds.pop()
    raise GenTypeError(path, "expression", f"unknown node {type(expr).__name__}")


def check_kind(expr: Expr, env: dict[str, str], path: str, expected: str) -> None:
    got = infer_kind(expr, env, path)
    if got != expected:
        raise GenTypeError(path, expected, f"got {got}")


def parse(source: str) -> GenProgram:
    return _Parser(source).program(source)


def validate(program: GenProgram) -> GenProgram:
    """Kind-check a program built directly from nodes (not via ``parse``)."""
    env = dict(INPUT_KINDS)
    for i, st in enumerate(program.statements, 1):
        if st.name in env or st.name in RESERVED:
            raise GenTypeError(f"statement {i} ({st.name})", "fresh name", "duplicate or reserved assignment")
        env[st.name] = infer_kind(st.expr, env, f"statement {i} ({st.name})")
    check_kind(program.result, env, "return", VECTOR)
    return program
