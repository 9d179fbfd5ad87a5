import numpy as np
import pytest

from autoda.core import GeneratorUnavailable
from autoda.dsl import FINAL_SOURCE, parse, pretty_print
from autoda.evolution import (
    AllFailed, Candidate, EvolutionConfig, Population, best_of, evaluate_fitness, load_history,
    run_evolution,
)
from autoda.llm import MockGenerator
from autoda.victims import sphere_instances

VICTIMS = sphere_instances(8, dim=16, seed=0)
SMALL = dict(pop_size=4, fitness_images=2, fitness_budget=200)


def cand(source, cid=0):
    try:
        program = parse(source)
    except Exception:
        program = None
    return Candidate(cid, source, program)


class BankGenerator:
    """Cycles a fixed bank on init and copies parents unchanged."""

    def __init__(self, bank):
        self.bank = bank
        self.calls = []

    def init_program(self, ctx):
        self.calls.append(("init", ctx.candidate_id, ctx.attempt))
        return self.bank[ctx.candidate_id % len(self.bank)]

    def crossover(self, a, b, ctx):
        self.calls.append(("crossover", ctx.candidate_id, ctx.attempt))
        return a

    def mutate(self, p, ctx):
        self.calls.append(("mutation", ctx.candidate_id, ctx.attempt))
        return p


def test_constant_program_fitness_is_start_distance():
    config = EvolutionConfig(fitness_images=8, fitness_budget=300)
    expected = np.mean([np.linalg.norm(v.x1 - v.x0) for v in VICTIMS])
    assert evaluate_fitness(cand("return x1"), VICTIMS, config) == pytest.approx(expected, rel=1e-15)


def test_final_program_fitness_near_optimum():
    config = EvolutionConfig(fitness_images=8, fitness_budget=8000)
    fit = evaluate_fitness(cand(FINAL_SOURCE), VICTIMS, config)
    assert 0.4 <= fit <= 0.44


def test_invalid_program_fails():
    config = EvolutionConfig(**SMALL)
    assert evaluate_fitness(cand("return x1 +"), VICTIMS, config) == float("inf")


def test_numeric_failure_threshold():
    config = EvolutionConfig(**SMALL)
    # the divisor is zero whenever k <= t, i.e. for a fraction t of proposals
    mostly = "k = rand(0, 1)\nreturn x1 / max(k - 0.7, 0)"
    sometimes = "k = rand(0, 1)\nreturn x1 / max(k - 0.3, 0)"
    assert evaluate_fitness(cand("return x1 / dot(x0 - x0, x1)"), VICTIMS, config) == float("inf")
    assert evaluate_fitness(cand(mostly), VICTIMS, config) == float("inf")
    assert np.isfinite(evaluate_fitness(cand(sometimes), VICTIMS, config))


def test_fitness_reproducible():
    config = EvolutionConfig(**SMALL, seed=5)
    a = evaluate_fitness(cand(FINAL_SOURCE, 7), VICTIMS, config)
    b = evaluate_fitness(cand(FINAL_SOURCE, 7), VICTIMS, config)
    c = evaluate_fitness(cand(FINAL_SOURCE, 8), VICTIMS, config)
    assert a == b and a != c


def test_fitness_is_write_once():
    c = cand("return x1")
    c.set_fitness(0.5)
    with pytest.raises(Exception):
        c.set_fitness(0.4)


def test_noop_generator_keeps_best_constant():
    bank = ["return x1", "return x1 + 0.05 * (x0 - x1)", "d = x0 - x1\nreturn x1 + 0.2 * d"]
    history = run_evolution(EvolutionConfig(generations=4, **SMALL), BankGenerator(bank), VICTIMS)
    best = [p.best().fitness for p in history]
    assert best == [best[0]] * 5


class FinalAtThree(BankGenerator):
    def crossover(self, a, b, ctx):
        return FINAL_SOURCE if ctx.generation == 3 else a


def test_elitism_keeps_improvement():
    gen = FinalAtThree(["return x1", "return x1 + 0.05 * (x0 - x1)"])
    history = run_evolution(EvolutionConfig(generations=6, **SMALL), gen, VICTIMS)
    final_fits = [c.fitness for c in history[3].members if c.source == pretty_print(parse(FINAL_SOURCE))]
    assert final_fits
    for pop in history[3:]:
        assert pop.best().fitness <= min(final_fits)


def test_population_invariants():
    config = EvolutionConfig(generations=4, **SMALL, seed=2)
    history = run_evolution(config, MockGenerator(2), VICTIMS)
    born = {}
    for pop in history:
        assert len(pop.members) == config.pop_size
        keys = [c.sort_key() for c in pop.members]
        assert keys == sorted(keys)
        for c in pop.members:
            born[c.id] = c
    for c in born.values():
        if c.generation_born == 0:
            assert c.parent_ids == ()
        for pid in c.parent_ids:
            assert pid in born and born[pid].generation_born < c.generation_born
    best = [p.best().fitness for p in history]
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_parse_retries_then_placeholder():
    class Broken(BankGenerator):
        def init_program(self, ctx):
            super().init_program(ctx)
            return "return" if ctx.candidate_id == 0 or ctx.attempt < 2 else "return x1"

    gen = Broken(["unused"])
    history = run_evolution(EvolutionConfig(generations=0, **SMALL), gen, VICTIMS)
    attempts = [a for role, cid, a in gen.calls if cid == 0]
    assert attempts == [0, 1, 2, 3]
    failed = [c for c in history[0].members if c.failed]
    assert [c.id for c in failed] == [0] and failed[0].diagnostic
    assert history[0].members[-1].id == 0  # failed sorts last
    assert all(not c.failed for c in history[0].members if c.id)


def test_jobs_do_not_change_results():
    base = EvolutionConfig(generations=2, **SMALL, seed=4)
    one = run_evolution(base, MockGenerator(4), VICTIMS)
    two = run_evolution(EvolutionConfig(**{**base.__dict__, "jobs": 2}), MockGenerator(4), VICTIMS)
    assert [[(c.id, c.fitness) for c in p.members] for p in one] == [[(c.id, c.fitness) for c in p.members] for p in two]


def test_persistence_and_resume(tmp_path):
    config = EvolutionConfig(generations=3, **SMALL, seed=6)
    full = run_evolution(config, MockGenerator(6), VICTIMS, tmp_path / "full")
    run_evolution(EvolutionConfig(**{**config.__dict__, "generations": 1}), MockGenerator(6), VICTIMS, tmp_path / "part")
    resumed = run_evolution(config, MockGenerator(6), VICTIMS, tmp_path / "part", resume=True)
    loaded, next_id = load_history(tmp_path / "full")
    assert next_id == 4 * 4
    for a, b, c in zip(full, resumed, loaded):
        assert [(m.id, m.fitness, m.source) for m in a.members] == [(m.id, m.fitness, m.source) for m in b.members]
        assert [(m.id, m.fitness, m.source) for m in a.members] == [(m.id, m.fitness, m.source) for m in c.members]
    index = (tmp_path / "full" / "gen_2" / "population.index").read_text()
    assert index.startswith("# generation 2\n# next_id 12\n")


def test_incomplete_generation_ignored_on_resume(tmp_path):
    config = EvolutionConfig(generations=2, **SMALL, seed=6)
    run_evolution(config, MockGenerator(6), VICTIMS, tmp_path)
    (tmp_path / "gen_2" / "population.index").unlink()
    history, _ = load_history(tmp_path)
    assert len(history) == 2
    again = run_evolution(config, MockGenerator(6), VICTIMS, tmp_path, resume=True)
    assert len(again) == 3


def test_resume_rejects_changed_settings(tmp_path):
    run_evolution(EvolutionConfig(generations=1, **SMALL, seed=6), MockGenerator(6), VICTIMS, tmp_path)
    with pytest.raises(Exception, match="differ"):
        run_evolution(EvolutionConfig(generations=2, **SMALL, seed=7), MockGenerator(6), VICTIMS, tmp_path,
                      resume=True)


def test_generator_outage_keeps_partial_history(tmp_path):
    class Outage(BankGenerator):
        def crossover(self, a, b, ctx):
            if ctx.generation == 2:
                raise GeneratorUnavailable("down")
            return a

    with pytest.raises(GeneratorUnavailable):
        run_evolution(EvolutionConfig(generations=4, **SMALL), Outage(["return x1"]), VICTIMS, tmp_path)
    history, _ = load_history(tmp_path)
    assert [p.generation for p in history] == [0, 1]


def _pop(*fits):
    members = []
    for i, f in enumerate(fits):
        c = Candidate(i, "return x1", parse("return x1"))
        c.set_fitness(f)
        members.append(c)
    return Population(0, members)


def test_best_of():
    assert best_of([_pop(0.7)]).id == 0
    assert best_of([_pop(0.5, 0.3)]).id == 1
    assert best_of([_pop(0.3, 0.3)]).id == 0
    with pytest.raises(AllFailed):
        best_of([_pop(float("inf"), float("inf"))])
