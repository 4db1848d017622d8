"""Atomic splittable flow over time games in the deterministic queuing model."""

from .errors import *  # noqa: F401,F403
from .instance import (Edge, Instance, Player, fig2_instance, load_instance, loads_instance,
                       parallel_instance, random_parallel_instance, save_instance, validate_instance)
from .timeseries import BreakpointFunction, StepFunction, integrate, max_preimage
from .dynamics import (FeasibilityReport, FlowOverTime, audit_feasibility, exit_time, split_outflow,
                       total_outflow, waiting_time)
from .strategy import (CallableStrategy, EquilibriumStrategy, Information, Row, TableStrategy, active_edges,
                       evaluate, make_equilibrium_strategy, make_time_only_strategy, mirror_shift_response,
                       mirror_strategy, strategy_from_dict)
from .engine import SimConfig, replay_uniqueness_check, simulate, simulate_fixed_step
from .analysis import (AnalysisReport, compute_r, demonstrate_no_equilibrium, deviation_payoff, payoff,
                       price_of_anarchy_report, system_optimum_parallel, verify_equilibrium_parallel)

__version__ = "0.1.0"
