"""
Attacking an analytic victim
============================

A sphere victim labels a point 1 when it lies at least ``r`` away from the
centre. With the original input at the centre, the closest adversarial
point is exactly ``r`` away, so we know what a perfect attack achieves.
"""

import numpy as np

from autoda.dsl import built_in_final
from autoda.engine import AttackConfig, ProgramProposal, boundary_attack_proposal, run_attack
from autoda.report import build_report, comparison_text
from autoda.victims import optimal_adversarial_distance, sphere_instances

# four victims in 16 dimensions, each starting 2r from the original
pairs = sphere_instances(4, dim=16, radius=0.4, seed=0)
print("optimum per victim:", [optimal_adversarial_distance(p.oracle, p.x0) for p in pairs])

# %%
# The evolved proposal program and the Boundary Attack baseline share the
# same random-walk loop; only the proposal differs.
traces = {"final": {}, "boundary": {}}
for i, pair in enumerate(pairs):
    cfg = AttackConfig(max_queries=5000, seed=i)
    traces["final"][str(i)] = run_attack(pair.oracle, pair.x0, pair.x1, ProgramProposal(built_in_final()),
                                         cfg, pair.label)
    traces["boundary"][str(i)] = run_attack(pair.oracle, pair.x0, pair.x1, boundary_attack_proposal(),
                                            cfg, pair.label)

# %%
# Distance after 500, 1000 and 5000 queries; ``*`` marks the best cell.
reports = [build_report(t, name, checkpoints=(500, 1000, 5000)) for name, t in traces.items()]
print(comparison_text(reports))

# %%
# Every accepted point is adversarial and strictly closer, so the curve
# never goes up.
trace = traces["final"]["0"]
curve = np.array([(pt.query_index, pt.d_min) for pt in trace.points])
print("accepted proposals:", trace.accepted_count, "of", trace.queries, "queries")
print("final step size s = %.3g, success estimate p = %.3f" % (trace.final_s, trace.final_p))
print("distance every 1000 queries:", np.round(curve[::1000, 1], 4))
