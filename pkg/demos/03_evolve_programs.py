"""
Evolving proposal programs offline
==================================

The search loop only ever sees program text: a generator proposes new
programs and the loop parses, scores and selects them. The mock generator
used here is deterministic and never touches the network; swap in
``LlmGenerator`` with an API key to use a chat model instead.
"""

import tempfile
from pathlib import Path

from autoda.evolution import EvolutionConfig, best_of, load_history, run_evolution
from autoda.llm import MockGenerator, render_crossover_prompt
from autoda.victims import sphere_instances

victims = sphere_instances(4, dim=16, seed=0)
config = EvolutionConfig(generations=4, pop_size=6, fitness_images=4, fitness_budget=600, seed=1)

run_dir = Path(tempfile.mkdtemp()) / "run"
history = run_evolution(config, MockGenerator(config.seed), victims, run_dir)

# %%
# Elitist survival: the best fitness (mean final distance) never rises.
for pop in history:
    fits = [c.fitness for c in pop.members]
    print(f"generation {pop.generation}: best {min(fits):.4f}  worst {max(fits):.4f}")

best = best_of(history)
print(f"\nbest candidate {best.id} (born in generation {best.generation_born}, parents {best.parent_ids}):")
print(best.source)

# %%
# Everything is on disk; a crashed run resumes from the last complete
# generation and continues exactly as if it had never stopped.
print(sorted(p.name for p in run_dir.iterdir()))
print((run_dir / "gen_4" / "population.index").read_text())
reloaded, _ = load_history(run_dir)
assert [c.id for c in reloaded[-1].members] == [c.id for c in history[-1].members]

# %%
# This is what a chat model would be asked when recombining two programs.
a, b = history[-1].members[:2]
print(render_crossover_prompt(a.source, b.source, a.fitness, b.fitness)[:600], "...")
