"""Shared domain types for decision-based attacks.

Inputs are plain float64 numpy arrays in [0, 1] carrying their own shape
(``(C, H, W)`` images or flat ``(d,)`` vectors). Labels are plain ints.
The only information an attacker gets from a victim is ``label_of(x)``,
and every such call is charged to a :class:`QueryBudget`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np


class AttackError(Exception):
    """Base class for errors raised by this package."""


class BudgetExhausted(AttackError):
    """Raised when a query is attempted with no budget left."""


class ShapeMismatch(AttackError, ValueError):
    pass


@runtime_checkable
class DecisionOracle(Protocol):
    """Hard-label view of a classifier."""

    def label_of(self, x: np.ndarray) -> int: ...

    def class_count(self) -> int: ...

    def input_shape(self) -> tuple[int, ...]: ...


@dataclass
class QueryBudget:
    max_queries: int
    used: int = 0

    def __post_init__(self):
        if self.max_queries < 1:
            raise ValueError("max_queries must be positive")

    @property
    def remaining(self) -> int:
        return self.max_queries - self.used

    def charge(self) -> None:
        if self.used >= self.max_queries:
            raise BudgetExhausted(f"query budget of {self.max_queries} exhausted")
        self.used += 1


@dataclass
class TracePoint:
    query_index: int
    d_min: float
    accepted: bool


@dataclass
class AttackTrace:
    """Query-indexed record of one attack run.

    ``points`` holds one entry per oracle query. ``iterations`` and
    ``numeric_failures`` count loop steps, including proposals that failed
    numerically and therefore never reached the oracle.
    """

    points: list[TracePoint]
    final_example: np.ndarray
    seed: int
    iterations: int = 0
    numeric_failures: int = 0
    final_s: float = float("nan")
    final_p: float = float("nan")

    @property
    def queries(self) -> int:
        return len(self.points)

    @property
    def d_min(self) -> float:
        return self.points[-1].d_min if self.points else float("inf")

    @property
    def accepted_count(self) -> int:
        return sum(pt.accepted for pt in self.points)

    def distance_at(self, query: int) -> float:
        return distance_at(self.points, query)


def distance_at(points: Sequence[TracePoint], query: int) -> float:
    """d_min at the largest recorded query index <= ``query`` (inf if none)."""
    best = float("inf")
    for pt in points:
        if pt.query_index > query:
            break
        best = pt.d_min
    return best


def as_input(data: Sequence[float] | np.ndarray, shape: Sequence[int] | None = None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(n) for n in shape)
        if arr.size != int(np.prod(shape)):
            raise ShapeMismatch(f"{arr.size} values cannot fill shape {shape}")
        arr = arr.reshape(shape)
    return arr


def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} vs {b.shape}")
    return float(np.linalg.norm((a - b).ravel()))


def clamp_to_domain(x: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def is_adversarial(oracle: DecisionOracle, x: np.ndarray, original_label: int, budget: QueryBudget) -> bool:
    """Spend one query and report whether ``x`` is misclassified."""
    budget.charge()
    return oracle.label_of(x) != original_label


@dataclass
class LabelledPair:
    """One attack instance: victim, original input, its label, a start point."""

    oracle: DecisionOracle
    x0: np.ndarray
    label: int
    x1: np.ndarray
    meta: dict = field(default_factory=dict)


class GeneratorUnavailable(AttackError):
    """The program generator could not produce output (e.g. endpoint down)."""
