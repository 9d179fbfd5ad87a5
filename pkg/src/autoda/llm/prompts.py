"""Prompt templates for program generation.

The initialization prompt keeps the original task wording with the variable
names mapped onto DSL inputs. The crossover and mutation prompts are our own
wording. All three end with the grammar reference and an instruction to
answer with a single fenced ``gen`` block.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

GRAMMAR_REFERENCE = """\
## Program grammar (.gen)
A program is a sequence of lines `name = expr`, ending with one line `return expr`.
Each name may be assigned only once and must be assigned before it is used.
Inputs:
  x0     original example (vector)
  x1     current best adversarial example (vector)
  noise  standard normal noise, same shape as x0 (vector)
  s      step-size hyperparameter (scalar)
Expressions:
  a + b, a - b, a * b   elementwise; a scalar operand broadcasts
  a / b                 b must be a scalar
  dot(a, b)             dot product of two vectors -> scalar
  norm2(a)              l2 norm of a vector -> scalar
  max(a, b), min(a, b)  of two scalars -> scalar
  randn()               standard normal scalar
  rand(lo, hi)          uniform scalar in [lo, hi); lo and hi are numbers
  choice(e1; e2; ...)   evaluates one branch chosen uniformly at random
  numbers such as 0.5, 1e-3; parentheses; '#' starts a comment
The returned expression must be a vector with the shape of x0.
There are no loops, conditionals or other functions.
"""

OUTPUT_INSTRUCTION = (
    "Answer with exactly one fenced code block tagged `gen` containing the program "
    "and nothing else inside the block."
)

INIT_TEXT = (
    "Given an image x0, its adversarial image x1, and a random normal noise noise, "
    "you need to design an algorithm to combine them to search for a new adversarial "
    "example x_new. s ranges from 0.5 to 1.5.  It gets larger when this algorithm "
    "outputs more adversarial examples, and vice versa. It can be used to control the "
    "step size of the search. Operations you may use include: adding, subtracting, "
    "multiplying, dividing, dot product, and l2 norm computation. Design an novel "
    "algorithm with various search techniques. Your code should be able to run without "
    "further assistance.\n\n"
    "Write the algorithm as a program in the language below; its return value is x_new.\n\n"
    "{grammar_reference}\n{output_instruction}\n"
)

CROSSOVER_TEXT = (
    "Below are two programs that propose a new adversarial example x_new from x0, x1, "
    "noise and s. Each was scored by the mean l2 distance between the adversarial and "
    "original examples it reached (lower is better).\n\n"
    "Program A (score {fitness_a}):\n```gen\n{parent_a}```\n\n"
    "Program B (score {fitness_b}):\n```gen\n{parent_b}```\n\n"
    "Combine these two programs into one improved program that keeps the most "
    "useful search moves of each and is likely to reach a lower score.\n\n"
    "{grammar_reference}\n{output_instruction}\n"
)

MUTATION_TEXT = (
    "Below is a program that proposes a new adversarial example x_new from x0, x1, "
    "noise and s. It scored {fitness_a} (mean l2 distance reached, lower is better).\n\n"
    "```gen\n{parent_a}```\n\n"
    "Make a small modification to this program, for example changing a coefficient, "
    "rescaling a term or adding one extra search direction, so that it may reach a "
    "lower score.\n\n"
    "{grammar_reference}\n{output_instruction}\n"
)

REQUIRED = {
    "initialization": {"grammar_reference"},
    "crossover": {"parent_a", "parent_b", "fitness_a", "fitness_b", "grammar_reference"},
    "mutation": {"parent_a", "fitness_a", "grammar_reference"},
}


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in REQUIRED:
            raise ValueError(f"unknown role {self.role!r}")
        missing = REQUIRED[self.role] - self.placeholders()
        if missing:
            raise ValueError(f"{self.role} template lacks placeholders {sorted(missing)}")

    def placeholders(self) -> set[str]:
        return {name for _, name, _, _ in string.Formatter().parse(self.text) if name}

    def render(self, **values) -> str:
        values.setdefault("grammar_reference", GRAMMAR_REFERENCE)
        values.setdefault("output_instruction", OUTPUT_INSTRUCTION)
        return self.text.format(**values)


INITIALIZATION = PromptTemplate("initialization", INIT_TEXT)
CROSSOVER = PromptTemplate("crossover", CROSSOVER_TEXT)
MUTATION = PromptTemplate("mutation", MUTATION_TEXT)


def _score(value) -> str:
    return "unknown" if value is None else f"{value:.6g}"


def _block(source: str) -> str:
    return source if source.endswith("\n") else source + "\n"


def render_initialization_prompt() -> str:
    return INITIALIZATION.render()


def render_crossover_prompt(parent_a: str, parent_b: str, fitness_a=None, fitness_b=None) -> str:
    return CROSSOVER.render(parent_a=_block(parent_a), parent_b=_block(parent_b),
                            fitness_a=_score(fitness_a), fitness_b=_score(fitness_b))


def render_mutation_prompt(parent: str, fitness=None) -> str:
    return MUTATION.render(parent_a=_block(parent), fitness_a=_score(fitness))
