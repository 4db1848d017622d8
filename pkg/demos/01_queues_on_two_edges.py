"""
Queues on two parallel edges
============================

Two players share a pair of identical edges (capacity 2, transit time 1)
until the horizon H = 21. Each player injects flow at rate 4, so whatever
they do the edges are overloaded and queues build up. When one player copies
the other with the edge roles swapped, both edges carry the same total rate
and both players share the optimum evenly.
"""

import numpy as np

from asflow import compute_r, fig2_instance, mirror_strategy, simulate, system_optimum_parallel
from asflow.analysis import payoffs
from asflow.scenarios import data_dir, load_strategy_file

inst = fig2_instance()
print("optimum:", system_optimum_parallel(inst))

# the second player follows a fixed schedule over time; the first mirrors it
opponent = load_strategy_file(data_dir() / "p2.strategy", inst, "p2")
profile = {"p1": mirror_strategy(opponent), "p2": opponent}
flow = simulate(inst, profile)

print("payoffs:", payoffs(flow))

# each edge receives rate 4 against capacity 2, so the queue grows at rate 2
# and the exit time 2*theta + 1 reaches the horizon at theta = 10
for e in inst.edge_ids:
    z = flow.queue_of(e)
    print(e, "queue at 0, 5, 10:", z.eval(np.array([0.0, 5.0, 10.0])), "r =", compute_r(flow, e))

# every rate, queue and exit time as a CSV bundle for plotting elsewhere
paths = flow.to_csv_bundle("demo_out/two_edges")
print("wrote", len(paths), "CSV files to demo_out/two_edges")
