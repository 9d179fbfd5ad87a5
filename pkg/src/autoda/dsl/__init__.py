"""A small sandboxed vector language for proposal (``generate``) programs.

Inputs are ``x0`` (original), ``x1`` (current adversarial point), ``noise``
(standard normal vector) and the step scalar ``s``.
"""

from .builtins import BUILTINS, FINAL_SOURCE, INITIAL_SOURCE, built_in_final, built_in_initial
from .interp import CompiledProgram, EvalContext, NumericError, evaluate
from .nodes import GenProgram
from .parser import GenSyntaxError, GenTypeError, ParseError, UnboundIdentifier, parse, validate
from .printer import format_expr, pretty_print

__all__ = [
    "BUILTINS", "FINAL_SOURCE", "INITIAL_SOURCE", "CompiledProgram", "EvalContext",
    "GenProgram", "GenSyntaxError", "GenTypeError", "NumericError", "ParseError",
    "UnboundIdentifier", "built_in_final", "built_in_initial", "evaluate", "format_expr",
    "parse", "pretty_print", "validate",
]
