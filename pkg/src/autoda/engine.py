"""Random-walk decision-based attack with a success-rate step controller.

The walk keeps the closest adversarial point found so far. Each iteration
asks a proposal for a candidate, clamps it to [0, 1], spends one query to
check it, and accepts it only when it is adversarial and strictly closer to
the original. After every iteration the controller updates its running
success estimate ``p`` and rescales the step scalar ``s`` so that the
acceptance rate settles near 0.25.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core import (
    AttackError, AttackTrace, DecisionOracle, QueryBudget, TracePoint, clamp_to_domain,
    is_adversarial, l2_distance,
)
from .dsl import CompiledProgram, EvalContext, GenProgram, NumericError

log = logging.getLogger(__name__)

TARGET_RATE = 0.25
P_DECAY = 0.95
S_EXPONENT = 0.1


class DomainError(AttackError, ValueError):
    pass


class StartingPointNotAdversarial(AttackError):
    pass


def f_of_p(p: float) -> float:
    """Piecewise-linear step multiplier; 0.5 at p=0, 1 at p=0.25, 1.5 at p=1."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p={p} outside [0, 1]")
    if p <= TARGET_RATE:
        return 0.5 + 2.0 * p
    return 5.0 / 6.0 + 2.0 * p / 3.0


def update_p(p: float, k: int) -> float:
    return P_DECAY * p + (1.0 - P_DECAY) * k


def update_s(s: float, p: float) -> float:
    return s * f_of_p(p) ** S_EXPONENT


@dataclass
class StepController:
    p: float = TARGET_RATE
    s: float = 0.001

    def update(self, k: int) -> None:
        self.p = update_p(self.p, k)
        self.s = update_s(self.s, self.p)


@dataclass
class AttackConfig:
    max_queries: int = 10000
    initial_s: float = 0.001
    seed: int = 0
    clamp: bool = True
    initial_p: float = TARGET_RATE
    max_numeric_failures: int | None = None  # defaults to max_queries

    def __post_init__(self):
        if self.max_queries < 1:
            raise ValueError("max_queries must be >= 1")
        if not self.initial_s > 0:
            raise ValueError("initial_s must be > 0")
        if not 0.0 <= self.initial_p <= 1.0:
            raise ValueError("initial_p must lie in [0, 1]")


class ProposalFn(Protocol):
    def propose(self, x: np.ndarray, x0: np.ndarray, rng: np.random.Generator, s: float) -> np.ndarray: ...


class ProgramProposal:
    """Adapts a DSL program to the proposal interface.

    A fresh standard-normal noise vector is drawn from ``rng`` on every call,
    before the program itself consumes any draws.
    """

    def __init__(self, program: GenProgram):
        self.program = program
        self._compiled = CompiledProgram(program)

    def propose(self, x, x0, rng, s):
        noise = rng.standard_normal(x0.shape)
        return self._compiled(EvalContext(x0=x0, x1=x, noise=noise, s=s, rng=rng))


class BoundaryProposal:
    """Orthogonal-step + source-step proposal of the Boundary Attack.

    The candidate is built in two moves from the current point ``x``:

    1. a spherical step: random direction orthogonal to ``x0 - x`` with length
       ``spherical_step * |x0 - x|``, then renormalized so the candidate stays
       on the sphere of radius ``|x0 - x|`` around ``x0``;
    2. a source step: move toward ``x0`` by ``source_step * |x0 - x|``.

    Both steps adapt on their own: every ``adapt_every`` calls to
    :meth:`feedback` the recent acceptance rate is compared against
    [``low``, ``high``] and both steps are multiplied or divided by
    ``adaptation``. The engine's ``s`` is ignored.
    """

    def __init__(self, spherical_step=0.01, source_step=0.01, adaptation=1.5,
                 window=30, adapt_every=10, low=0.2, high=0.5):
        self.spherical_step = float(spherical_step)
        self.source_step = float(source_step)
        self.adaptation = float(adaptation)
        self.adapt_every = adapt_every
        self.low, self.high = low, high
        self._history: deque[bool] = deque(maxlen=window)
        self._calls = 0

    def propose(self, x, x0, rng, s):
        source_dir = x0 - x
        source_norm = float(np.linalg.norm(source_dir.ravel()))
        if source_norm == 0.0:
            return x.copy()
        unit = source_dir / source_norm

        eta = rng.standard_normal(x.shape)
        eta = eta - float(np.dot(eta.ravel(), unit.ravel())) * unit
        eta_norm = float(np.linalg.norm(eta.ravel()))
        if eta_norm > 0.0:
            eta = eta * (self.spherical_step * source_norm / eta_norm)
        else:
            eta = np.zeros_like(x)
        # x0 - source_dir == x; dividing by sqrt(1 + step^2) keeps the radius
        spherical = x0 + (eta - source_dir) / np.sqrt(self.spherical_step ** 2 + 1.0)
        spherical = clamp_to_domain(spherical)

        new_dir = x0 - spherical
        new_norm = float(np.linalg.norm(new_dir.ravel()))
        if new_norm == 0.0:
            return spherical
        # correct for the clamp having moved the point off the sphere
        length = self.source_step * source_norm + new_norm - source_norm
        length = max(length, 0.0) / new_norm
        return spherical + length * new_dir

    def feedback(self, accepted: bool) -> None:
        self._history.append(bool(accepted))
        self._calls += 1
        if self._calls % self.adapt_every or len(self._history) < self._history.maxlen:
            return
        rate = sum(self._history) / len(self._history)
        if rate > self.high:
            self.spherical_step *= self.adaptation
            self.source_step *= self.adaptation
        elif rate < self.low:
            self.spherical_step /= self.adaptation
            self.source_step /= self.adaptation


def boundary_attack_proposal(spherical_step=0.01, source_step=0.01, adaptation=1.5) -> BoundaryProposal:
    return BoundaryProposal(spherical_step, source_step, adaptation)


def run_attack(oracle: DecisionOracle, x0, x1, proposal: ProposalFn, config: AttackConfig,
               original_label: int | None = None) -> AttackTrace:
    """Minimize ``|x - x0|`` over adversarial ``x`` starting from ``x1``.

    Every oracle query is charged to a fresh budget of ``config.max_queries``
    and recorded in the trace, including the label query for ``x0`` (only when
    ``original_label`` is not supplied) and the check that ``x1`` is
    adversarial. The run ends when the budget is spent or, if the proposal
    keeps failing numerically, after ``max_numeric_failures`` such failures.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x = np.asarray(x1, dtype=np.float64).copy()
    budget = QueryBudget(config.max_queries)
    rng = np.random.default_rng(config.seed)
    ctl = StepController(config.initial_p, config.initial_s)
    max_failures = config.max_numeric_failures
    if max_failures is None:
        max_failures = config.max_queries

    d_min = l2_distance(x, x0)
    points: list[TracePoint] = []

    if original_label is None:
        budget.charge()
        original_label = oracle.label_of(x0)
        points.append(TracePoint(budget.used, d_min, False))
    if not is_adversarial(oracle, x, original_label, budget):
        raise StartingPointNotAdversarial("starting point has the original label")
    points.append(TracePoint(budget.used, d_min, False))

    feedback = getattr(proposal, "feedback", None)
    iterations = failures = 0
    while budget.used < budget.max_queries and failures < max_failures:
        iterations += 1
        try:
            candidate = proposal.propose(x, x0, rng, ctl.s)
        except NumericError:
            failures += 1
            k = 0
        else:
            if config.clamp:
                candidate = clamp_to_domain(candidate)
            k = 0
            adv = is_adversarial(oracle, candidate, original_label, budget)
            if adv:
                dist = l2_distance(candidate, x0)
                if dist < d_min:
                    x, d_min, k = candidate, dist, 1
            points.append(TracePoint(budget.used, d_min, bool(k)))
        ctl.update(k)
        if feedback is not None:
            feedback(bool(k))

    log.debug("attack done: %d queries, %d iterations, d_min=%.6g", budget.used, iterations, d_min)
    return AttackTrace(points=points, final_example=x, seed=config.seed, iterations=iterations,
                       numeric_failures=failures, final_s=ctl.s, final_p=ctl.p)
