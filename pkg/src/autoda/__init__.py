"""Decision-based adversarial attacks driven by small evolvable proposal programs."""

from .core import (
    AttackError, AttackTrace, BudgetExhausted, DecisionOracle, GeneratorUnavailable, LabelledPair,
    QueryBudget, ShapeMismatch, TracePoint, clamp_to_domain, is_adversarial, l2_distance,
)
from .dsl import built_in_final, built_in_initial, parse, pretty_print
from .engine import (
    AttackConfig, ProgramProposal, StartingPointNotAdversarial, StepController, boundary_attack_proposal,
    run_attack,
)
from .evolution import Candidate, EvolutionConfig, Population, run_evolution
from .report import EvalReport, build_report

__version__ = "0.1.0"
