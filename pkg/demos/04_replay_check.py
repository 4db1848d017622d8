"""
Replaying a profile with different solvers
==========================================

A strategy profile induces exactly one feasible flow. We rerun the bundled
scenarios with the event order reversed and with a fixed-step solver at
three step sizes. The exact runs agree, and the fixed-step error shrinks by
a factor of ten with each refinement (or vanishes when every event falls on
the step grid).
"""

from asflow.engine import replay_uniqueness_check
from asflow.scenarios import load_scenarios

for sc in load_scenarios():
    rep = replay_uniqueness_check(sc.instance, sc.profile())
    errs = ", ".join(f"{h:g}: {e:.2e}" for h, e in rep.fixed_errors.items())
    print(f"{sc.name:20s} {'PASS' if rep.passed else 'FAIL'} reversed={rep.event_deviation:.1e} fixed-step {errs}")
