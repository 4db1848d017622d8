"""
Capacity-proportional routing is an equilibrium
===============================================

When players may observe the exit times of all edges, splitting flow over
the still useful edges in proportion to their capacities is an equilibrium
on parallel networks. Its total payoff equals the optimum, and every player
earns the optimum times their share of the supply. We check this on random
instances, compare the optimum with a linear program, and try random
deviations.
"""

import numpy as np

from asflow import parallel_instance, random_parallel_instance, system_optimum_parallel, verify_equilibrium_parallel
from asflow.analysis import price_of_anarchy_report, probe_deviations

# three edges with different transit times, two players with supply 3 and 1
inst = parallel_instance([2.0, 1.0, 1.0], [0.0, 2.0, 5.0], [3.0, 1.0], 8.0)
v = verify_equilibrium_parallel(inst)
print("verdict:", v.status, "payoffs:", v.payoffs, "optimum:", v.opt)

# random suite: the ratio optimum / total payoff is 1 on all of them
rng = np.random.default_rng(7)
suite = [random_parallel_instance(rng) for _ in range(25)]
rep = price_of_anarchy_report(suite)
print("price of anarchy range:", min(r.ratio for r in rep.rows), max(r.ratio for r in rep.rows))

# random time-only deviations never beat a player's share of the optimum
probes = probe_deviations(inst, rng, n=20)
print("largest excess over the share:", max(p.excess for p in probes))
print("optimum is", system_optimum_parallel(inst))
