"""
Writing a proposal program
==========================

Proposal programs are written in a tiny vector language. They receive the
original ``x0``, the current adversarial point ``x1``, a fresh noise vector
``noise`` and the step scalar ``s``, and return the next point to try.
"""

import numpy as np

from autoda.dsl import EvalContext, NumericError, evaluate, parse, pretty_print
from autoda.engine import AttackConfig, ProgramProposal, run_attack
from autoda.victims import hyperplane_instances

source = """
# walk toward x0, jitter sideways
d = x0 - x1
u = d / norm2(d)
return x1 + 0.5 * s * d + s * norm2(d) * (noise - dot(noise, u) * u)
"""
program = parse(source)
print(pretty_print(program))

# %%
# Evaluation is deterministic given the context, random draws included.
ctx = EvalContext(x0=np.array([0.2, 0.4]), x1=np.array([0.8, 0.9]), noise=np.array([0.3, -1.0]), s=0.1,
                  rng=np.random.default_rng(0))
print("one proposal:", evaluate(program, ctx))

# %%
# Kind errors and unbound names are caught before anything runs.
for bad in ("return x1 / x0", "return x1 + s * e"):
    try:
        parse(bad)
    except Exception as exc:
        print(f"{bad!r}: {type(exc).__name__}: {exc}")

# division by zero surfaces as NumericError; the attack loop counts it as a
# failed step without spending a query
try:
    evaluate(parse("return x0 / dot(x1 - x1, x0)"), ctx)
except NumericError as exc:
    print("NumericError:", exc)

# %%
# Run it against a hyperplane victim whose optimum is the margin, 0.4.
pair = hyperplane_instances(1, dim=16, margin=0.4, seed=3)[0]
trace = run_attack(pair.oracle, pair.x0, pair.x1, ProgramProposal(program), AttackConfig(3000, seed=1), pair.label)
print("start %.4f -> final %.4f (optimum 0.4)" % (trace.points[0].d_min, trace.d_min))
