"""Evolutionary search over proposal programs.

A population of ``pop_size`` programs is scored by running the attack on a
fixed evaluation set and averaging the final distances (lower is better).
Each generation breeds ``pop_size`` children: two parents are picked by
binary tournament, recombined with probability ``crossover_prob`` and the
child mutated with probability ``mutation_prob``. Parents and children are
then merged and the best ``pop_size`` survive, so the best fitness can never
get worse.

Variation is delegated to a :class:`ProgramGenerator`, which only ever sees
and returns source text; validity is enforced here by parsing.

When a run directory is given, every generation is written as::

    <run_dir>/config.json
    <run_dir>/gen_<k>/cand_<id>.gen
    <run_dir>/gen_<k>/cand_<id>.meta
    <run_dir>/gen_<k>/population.index

``population.index`` is written last, so a generation directory without it
is incomplete and ignored on resume.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .core import AttackError, GeneratorUnavailable, LabelledPair
from .dsl import GenProgram, ParseError, parse, pretty_print
from .engine import AttackConfig, ProgramProposal, run_attack

log = logging.getLogger(__name__)

PARSE_RETRIES = 3
FAILED = math.inf

__all__ = [
    "AllFailed", "Candidate", "EvolutionConfig", "GenerationContext", "GeneratorUnavailable",
    "Population", "ProgramGenerator", "best_of", "evaluate_fitness", "fitness_seed",
    "load_history", "run_evolution",
]


class AllFailed(AttackError):
    pass


@dataclass
class EvolutionConfig:
    generations: int = 20
    pop_size: int = 10
    crossover_prob: float = 1.0
    mutation_prob: float = 0.5
    fitness_images: int = 8
    fitness_budget: int = 8000
    seed: int = 0
    initial_s: float = 0.001
    jobs: int = 1

    def __post_init__(self):
        for name in ("crossover_prob", "mutation_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("pop_size", "fitness_images", "fitness_budget", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def search_settings(self) -> dict:
        """Fields that must match between a run and its resumption."""
        d = asdict(self)
        del d["generations"], d["jobs"]
        return d


@dataclass
class Candidate:
    id: int
    source: str
    program: GenProgram | None
    parent_ids: tuple[int, ...] = ()
    generation_born: int = 0
    diagnostic: str = ""
    _fitness: float | None = field(default=None, repr=False)

    @property
    def fitness(self) -> float | None:
        return self._fitness

    @property
    def failed(self) -> bool:
        return self._fitness == FAILED

    @property
    def evaluated(self) -> bool:
        return self._fitness is not None

    def set_fitness(self, value: float, diagnostic: str = "") -> None:
        if self._fitness is not None:
            raise AttackError(f"candidate {self.id} already has fitness {self._fitness}")
        self._fitness = float(value)
        if diagnostic:
            self.diagnostic = diagnostic

    def sort_key(self):
        f = self._fitness if self._fitness is not None else FAILED
        return (f == FAILED, f, self.id)

    def meta(self) -> dict:
        return {
            "id": self.id,
            "status": "failed" if self.failed else ("ok" if self.evaluated else "unevaluated"),
            "fitness": None if self._fitness is None or self.failed else self._fitness,
            "parent_ids": list(self.parent_ids),
            "generation_born": self.generation_born,
            "diagnostic": self.diagnostic,
        }


@dataclass
class Population:
    generation: int
    members: list[Candidate]

    def best(self) -> Candidate:
        return min(self.members, key=Candidate.sort_key)

    def fitness_values(self) -> list[float]:
        return [c.fitness for c in self.members]


@dataclass
class GenerationContext:
    """What a generator is told about the slot it is filling."""

    generation: int
    candidate_id: int
    role: str  # "init", "crossover" or "mutation"
    attempt: int = 0
    fitness_a: float | None = None
    fitness_b: float | None = None


class ProgramGenerator(Protocol):
    def init_program(self, context: GenerationContext) -> str: ...

    def crossover(self, parent_a: str, parent_b: str, context: GenerationContext) -> str: ...

    def mutate(self, parent: str, context: GenerationContext) -> str: ...


def fitness_seed(seed: int, candidate_id: int, image_index: int) -> int:
    ss = np.random.SeedSequence([seed, candidate_id, image_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _score(program: GenProgram | None, candidate_id: int, victims: Sequence[LabelledPair],
           config: EvolutionConfig) -> tuple[float, str]:
    if program is None:
        return FAILED, "program did not parse"
    proposal = ProgramProposal(program)
    distances = []
    for i, pair in enumerate(victims[: config.fitness_images]):
        attack = AttackConfig(max_queries=config.fitness_budget, initial_s=config.initial_s,
                              seed=fitness_seed(config.seed, candidate_id, i))
        trace = run_attack(pair.oracle, pair.x0, pair.x1, proposal, attack, pair.label)
        if trace.iterations and trace.numeric_failures / trace.iterations > 0.5:
            return FAILED, (f"image {i}: {trace.numeric_failures} of {trace.iterations} "
                            "proposals failed numerically")
        distances.append(trace.d_min)
    return float(np.mean(distances)), ""


def evaluate_fitness(candidate: Candidate, victims: Sequence[LabelledPair], config: EvolutionConfig) -> float:
    """Mean final distance over the evaluation set; ``inf`` marks failure.

    Does not modify ``candidate``.
    """
    return _score(candidate.program, candidate.id, victims, config)[0]


def _evaluate_all(cands: list[Candidate], victims, config: EvolutionConfig) -> None:
    todo = [c for c in cands if not c.evaluated]
    if config.jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(lambda c: _score(c.program, c.id, victims, config), todo))
    else:
        results = [_score(c.program, c.id, victims, config) for c in todo]
    for cand, (fit, diag) in zip(todo, results):
        cand.set_fitness(fit, diag)


def _parsed(source: str) -> tuple[GenProgram | None, str]:
    try:
        return parse(source), ""
    except ParseError as exc:
        return None, str(exc)


def _make_candidate(cid, generation, parents, produce) -> Candidate:
    """Call ``produce(attempt)`` until it yields parseable text or retries run out."""
    source, diag = "", ""
    for attempt in range(PARSE_RETRIES + 1):
        source = produce(attempt)
        program, diag = _parsed(source)
        if program is not None:
            return Candidate(cid, pretty_print(program), program, tuple(parents), generation)
        log.info("candidate %d attempt %d did not parse: %s", cid, attempt, diag)
    cand = Candidate(cid, source, None, tuple(parents), generation, diagnostic=diag)
    cand.set_fitness(FAILED, diag)
    return cand


def _initial_population(config, generator, victims, next_id) -> tuple[Population, int]:
    members = []
    for _ in range(config.pop_size):
        cid = next_id
        next_id += 1
        members.append(_make_candidate(
            cid, 0, (), lambda attempt, cid=cid: generator.init_program(
                GenerationContext(0, cid, "init", attempt))))
    _evaluate_all(members, victims, config)
    members.sort(key=Candidate.sort_key)
    return Population(0, members), next_id


def _tournament(members: list[Candidate], rng: np.random.Generator) -> Candidate:
    # members are sorted, so the lower index wins
    if len(members) == 1:
        return members[0]
    i, j = rng.choice(len(members), size=2, replace=False)
    return members[min(i, j)]


def _next_generation(pop: Population, config, generator, victims, next_id) -> tuple[Population, int]:
    g = pop.generation + 1
    rng = np.random.default_rng([config.seed, g])
    children = []
    for _ in range(config.pop_size):
        a = _tournament(pop.members, rng)
        b = _tournament(pop.members, rng)
        do_cross = rng.random() < config.crossover_prob
        do_mutate = rng.random() < config.mutation_prob
        cid = next_id
        next_id += 1
        parents = (a.id, b.id) if do_cross else (a.id,)

        def produce(attempt, a=a, b=b, cid=cid, do_cross=do_cross, do_mutate=do_mutate):
            src = a.source
            if do_cross:
                src = generator.crossover(a.source, b.source, GenerationContext(
                    g, cid, "crossover", attempt, a.fitness, b.fitness))
            if do_mutate:
                src = generator.mutate(src, GenerationContext(g, cid, "mutation", attempt, a.fitness))
            return src

        children.append(_make_candidate(cid, g, parents, produce))
    _evaluate_all(children, victims, config)
    merged = sorted(pop.members + children, key=Candidate.sort_key)
    return Population(g, merged[: config.pop_size]), next_id


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt_fitness(c: Candidate) -> str:
    return "inf" if c.failed else repr(c.fitness)


def save_population(run_dir: Path, pop: Population, next_id: int) -> None:
    gen_dir = Path(run_dir) / f"gen_{pop.generation}"
    gen_dir.mkdir(parents=True, exist_ok=True)
    for c in pop.members:
        (gen_dir / f"cand_{c.id}.gen").write_text(c.source, encoding="utf-8")
        (gen_dir / f"cand_{c.id}.meta").write_text(json.dumps(c.meta(), indent=1) + "\n", encoding="utf-8")
    lines = [f"# generation {pop.generation}", f"# next_id {next_id}",
             "rank\tid\tfitness\tstatus\tborn\tparents"]
    for rank, c in enumerate(pop.members):
        status = "failed" if c.failed else "ok"
        parents = ",".join(str(p) for p in c.parent_ids) or "-"
        lines.append(f"{rank}\t{c.id}\t{_fmt_fitness(c)}\t{status}\t{c.generation_born}\t{parents}")
    _write_atomic(gen_dir / "population.index", "\n".join(lines) + "\n")


def load_population(gen_dir: Path) -> tuple[Population, int]:
    gen_dir = Path(gen_dir)
    text = (gen_dir / "population.index").read_text(encoding="utf-8").splitlines()
    generation = int(text[0].split()[-1])
    next_id = int(text[1].split()[-1])
    members = []
    for row in text[3:]:
        cid = int(row.split("\t")[1])
        meta = json.loads((gen_dir / f"cand_{cid}.meta").read_text(encoding="utf-8"))
        source = (gen_dir / f"cand_{cid}.gen").read_text(encoding="utf-8")
        program = parse(source) if meta["status"] == "ok" else None
        cand = Candidate(cid, source, program, tuple(meta["parent_ids"]), meta["generation_born"],
                         meta.get("diagnostic", ""))
        cand.set_fitness(FAILED if meta["status"] == "failed" else meta["fitness"])
        members.append(cand)
    return Population(generation, members), next_id


def load_history(run_dir) -> tuple[list[Population], int]:
    """All complete generations in ``run_dir`` plus the next free candidate id."""
    run_dir = Path(run_dir)
    gens = sorted(int(p.name[4:]) for p in run_dir.glob("gen_*") if (p / "population.index").exists())
    history, next_id = [], 0
    for k, g in enumerate(gens):
        if g != k:
            raise AttackError(f"{run_dir}: generation {k} missing")
        pop, next_id = load_population(run_dir / f"gen_{g}")
        history.append(pop)
    return history, next_id


def run_evolution(config: EvolutionConfig, generator: ProgramGenerator, victims: Sequence[LabelledPair],
                  run_dir=None, resume: bool = False, on_generation=None) -> list[Population]:
    """Run (or resume) the search; returns generations ``0..config.generations``.

    With ``resume=True`` the complete generations already in ``run_dir`` are
    loaded and the search continues from the last one. Because all randomness
    is derived from ``config.seed``, the generation index and candidate ids, a
    resumed run reproduces an uninterrupted one exactly (given a stateless
    generator such as the mock).
    """
    if len(victims) < config.fitness_images:
        raise ValueError(f"need {config.fitness_images} evaluation pairs, got {len(victims)}")
    run_dir = Path(run_dir) if run_dir is not None else None
    history: list[Population] = []
    next_id = 0
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        cfg_path = run_dir / "config.json"
        if resume:
            if cfg_path.exists():
                stored = json.loads(cfg_path.read_text(encoding="utf-8"))
                stored.pop("generations", None)
                stored.pop("jobs", None)
                if stored != config.search_settings():
                    raise AttackError(f"{run_dir}: stored settings {stored} differ from {config.search_settings()}")
            history, next_id = load_history(run_dir)
        _write_atomic(cfg_path, json.dumps(config.search_settings(), indent=1, sort_keys=True) + "\n")

    def record(pop: Population):
        history.append(pop)
        if run_dir is not None:
            save_population(run_dir, pop, next_id)
        best = pop.best()
        log.info("generation %d: best %s (cand %d)", pop.generation, _fmt_fitness(best), best.id)
        if on_generation is not None:
            on_generation(pop)

    if not history:
        pop, next_id = _initial_population(config, generator, victims, next_id)
        record(pop)
    while history[-1].generation < config.generations:
        pop, next_id = _next_generation(history[-1], config, generator, victims, next_id)
        record(pop)
    return history[: config.generations + 1]


def best_of(history: Sequence[Population]) -> Candidate:
    if not history:
        raise ValueError("empty history")
    final = history[-1]
    best = min(final.members, key=Candidate.sort_key)
    if best.failed or not best.evaluated:
        raise AllFailed(f"every candidate of generation {final.generation} failed")
    return best
