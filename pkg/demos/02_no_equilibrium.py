"""
Beating any time-only opponent
==============================

On the two-edge instance a player who only looks at the clock can always be
exploited. The responder first mirrors the opponent, which guarantees half
of the optimum. It then moves a small amount of flow to the edge the opponent
favours just before the last useful entry time. That edge fills up a little
earlier, the other edge stays usable a little longer, and the responder
collects strictly more than half.
"""

import numpy as np

from asflow import demonstrate_no_equilibrium, fig2_instance
from asflow.scenarios import data_dir, load_strategy_file
from asflow.strategy import random_time_only_strategy

inst = fig2_instance()
opponent = load_strategy_file(data_dir() / "p2.strategy", inst, "p2")

demo = demonstrate_no_equilibrium(inst, opponent)
print("mirror baseline:", demo.baseline)
print("response payoff:", demo.response_payoff, "margin:", demo.margin)
print("epsilon:", demo.epsilon, "delta:", demo.delta)
print("last entry times: r =", demo.r, "shifted:", demo.r_hat_1, demo.r_hat_2)

# the same construction works against random schedules
rng = np.random.default_rng(1)
margins = [demonstrate_no_equilibrium(inst, random_time_only_strategy(rng, inst, "p2")).margin
           for _ in range(20)]
print("smallest margin over 20 random opponents:", min(margins))
