"""Construct the flow over time induced by a strategy profile.

Two solvers share one state representation (an :class:`EdgeQueue` per edge):

* the event-driven solver advances a frontier time from event to event. Between
  events every node inflow, every strategy value and every queue regime is
  constant, so each step is exact;
* the fixed-step solver freezes the information at ``k*h`` and keeps the
  resulting rates for the whole step. It accepts programmatic strategies and
  converges to the event-driven result at first order in ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import EdgeQueue, FlowOverTime
from .errors import EventBudgetExceeded, NonLipschitzDetected
from .instance import Instance
from .strategy import EXIT_TIMES, CallableStrategy, Information, Strategy, TableStrategy, EquilibriumStrategy
from .timeseries import EPS_TIME, StepFunction

EVENT_DRIVEN = "event_driven"
FIXED_STEP = "fixed_step"


@dataclass(frozen=True)
class SimConfig:
    """Solver settings. ``step`` is an absolute time step (fixed-step mode only)."""

    mode: str = EVENT_DRIVEN
    step: float | None = None
    eps_time: float = EPS_TIME
    max_events: int = 10**6
    tie_order: str = "forward"
    information: str = EXIT_TIMES
    lipschitz_probe: float = 1e-9
    lipschitz_jump: float = 1e-3

    def __post_init__(self):
        if self.mode not in (EVENT_DRIVEN, FIXED_STEP):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == FIXED_STEP and not (self.step is not None and self.step > 0):
            raise ValueError("fixed-step mode needs a step h > 0")
        if not self.eps_time > 0:
            raise ValueError("eps_time must be positive")
        if self.tie_order not in ("forward", "reverse"):
            raise ValueError("tie_order must be 'forward' or 'reverse'")


class _State:
    """Queues, activity flags and recorded inflow pieces shared by both solvers."""

    def __init__(self, instance: Instance, profile: dict[str, Strategy], config: SimConfig):
        self.inst = instance
        self.cfg = config
        self.H = instance.horizon
        self.pids = instance.player_ids
        self.strategies = [profile[p] for p in self.pids]
        self.rates_d = np.array([p.rate for p in instance.players])
        self.origin = [p.origin for p in instance.players]
        self.dest = [p.destination for p in instance.players]
        n = len(self.pids)
        self.queues = [EdgeQueue(e.capacity, e.transit, n, config.eps_time) for e in instance.edges]
        self.capacity = np.array([e.capacity for e in instance.edges])
        self.transit = np.array([e.transit for e in instance.edges])
        # an edge is inactive once T_e >= H (up to eps); this never reverts since T_e is nondecreasing
        self.active = self.transit < self.H - config.eps_time
        self.pieces: list[list[list]] = [[[] for _ in range(n)] for _ in instance.edges]
        nodes = list(instance.nodes)
        order = range(len(nodes)) if config.tie_order == "forward" else range(len(nodes) - 1, -1, -1)
        self.nodes = [nodes[i] for i in order]
        self.player_order = list(range(n)) if config.tie_order == "forward" else list(range(n - 1, -1, -1))
        # edges whose outflow feeds a routing decision of some player
        self.feeds = np.array([any(instance.out_edges(e.head)) for e in instance.edges])
        self.events = 0

    def exit_times(self) -> np.ndarray:
        return np.array([q.theta + q.z / q.capacity + q.transit for q in self.queues])

    def information(self, theta: float) -> Information:
        T = self.exit_times()
        act = frozenset(e.id for e, a in zip(self.inst.edges, self.active) if a)
        if self.cfg.information == EXIT_TIMES:
            return Information.with_exit_times(theta, T, act)
        return Information.time_only(theta)

    def node_inflow(self, theta: float) -> dict[str, np.ndarray]:
        """Per-player flow arriving at each node at ``theta`` (right limit), plus supply."""
        n = len(self.pids)
        C = {v: np.zeros(n) for v in self.inst.nodes}
        for i, e in enumerate(self.inst.edges):
            C[e.head] = C[e.head] + self.queues[i].outflow_at(theta)
        for j in range(n):
            C[self.origin[j]][j] += self.rates_d[j]
            C[self.dest[j]][j] = 0.0  # flow reaching the destination leaves the network
        return C

    def inflow_rates(self, theta: float, info: Information, probe=None) -> np.ndarray:
        """Edge-by-player inflow rates implied by the strategies at ``theta``."""
        x = np.zeros((len(self.queues), len(self.pids)))
        C = self.node_inflow(theta)
        for v in self.nodes:
            outs = self.inst.out_edges(v)
            if not outs:
                continue
            for j in self.player_order:
                c = C[v][j]
                if c <= 0.0 or v == self.dest[j]:
                    continue
                p = self.strategies[j].proportions(v, info)
                if probe is not None:
                    probe(self.strategies[j], v, info, p)
                for k, i in enumerate(outs):
                    x[i, j] = p[k] * c
        return x

    def commit(self, a: float, b: float, x: np.ndarray) -> None:
        for i, q in enumerate(self.queues):
            q.advance(b, x[i])
            for j in range(len(self.pids)):
                pl = self.pieces[i][j]
                r = float(x[i, j])
                if pl and pl[-1][1] == a and pl[-1][2] == r:
                    pl[-1][1] = b
                else:
                    pl.append([a, b, r])
        T = self.exit_times()
        self.active &= T < self.H - self.cfg.eps_time

    def finish(self, mode: str) -> FlowOverTime:
        H = self.H
        inst = self.inst
        inflow, outflow, queue, exit_fn = {}, {}, {}, {}
        for i, e in enumerate(inst.edges):
            outs = self.queues[i].outflow_functions(H)
            for j, p in enumerate(self.pids):
                inflow[e.id, p] = StepFunction.from_pieces([tuple(t) for t in self.pieces[i][j]], 0.0, H)
                outflow[e.id, p] = outs[j]
            queue[e.id] = self.queues[i].queue_function()
            exit_fn[e.id] = self.queues[i].exit_function()
        return FlowOverTime(inst, inflow, outflow, queue, exit_fn, self.events,
                            {"mode": mode, "tie_order": self.cfg.tie_order})


def _check_profile(instance: Instance, profile: dict[str, Strategy]) -> None:
    missing = [p for p in instance.player_ids if p not in profile]
    if missing:
        raise ValueError(f"no strategy for players {missing}")
    for p, g in profile.items():
        if g.player != p:
            raise ValueError(f"strategy for {p} was built for player {g.player}")


def simulate(instance: Instance, profile: dict[str, Strategy], config: SimConfig | None = None,
             **overrides) -> FlowOverTime:
    """The unique feasible flow over time induced by ``profile``."""
    cfg = config or SimConfig()
    if overrides:
        cfg = replace(cfg, **overrides)
    if cfg.mode == FIXED_STEP:
        return simulate_fixed_step(instance, profile, cfg)
    _check_profile(instance, profile)
    for g in profile.values():
        if not isinstance(g, (TableStrategy, EquilibriumStrategy)):
            raise ValueError("the event-driven solver needs table or builtin strategies; use fixed-step mode")

    st = _State(instance, profile, cfg)
    H, eps = st.H, cfg.eps_time
    bps = [g.breakpoints() for g in st.strategies]
    a = 0.0
    while a < H:
        st.events += 1
        if st.events > cfg.max_events:
            raise EventBudgetExceeded(f"more than {cfg.max_events} events before reaching the horizon (at {a})")
        info = st.information(a)
        x = st.inflow_rates(a, info)
        totals = x.sum(axis=1)

        b = H
        for i, q in enumerate(st.queues):
            if st.feeds[i]:
                # outflow beyond the current exit time is not committed yet
                b = min(b, q.next_outflow_change(a), q.exit)
            b = min(b, q.depletion_time(totals[i]))
            slope = q.exit_slope(totals[i])
            if st.active[i] and slope > 0:
                T = q.theta + q.z / q.capacity + q.transit
                b = min(b, a + (H - T) / slope)
        for bp in bps:
            k = int(np.searchsorted(bp, a, side="right"))
            if k < len(bp):
                b = min(b, float(bp[k]))
        # events closer than eps are processed together at one frontier time
        if b - a < eps:
            b = min(H, a + eps) if b <= a else b
        st.commit(a, b, x)
        a = b
    return st.finish(EVENT_DRIVEN)


def simulate_fixed_step(instance: Instance, profile: dict[str, Strategy], config: SimConfig | None = None,
                        step: float | None = None) -> FlowOverTime:
    """Explicit first-order scheme: information frozen at ``k*h`` for the step ``[k*h, (k+1)*h)``."""
    cfg = config or SimConfig(mode=FIXED_STEP, step=step)
    if step is not None:
        cfg = replace(cfg, mode=FIXED_STEP, step=step)
    if cfg.mode != FIXED_STEP:
        cfg = replace(cfg, mode=FIXED_STEP)
    _check_profile(instance, profile)
    st = _State(instance, profile, cfg)
    H, h = st.H, float(cfg.step)
    # node inflows at k*h must already be committed, so a step may not exceed the shortest feeding transit time
    feeding = [e.transit for e, f in zip(instance.edges, st.feeds) if f]
    if feeding and h > min(feeding):
        h = min(feeding)
    n_steps = max(1, math.ceil(H / h - 1e-12))
    if n_steps > cfg.max_events:
        raise EventBudgetExceeded(f"{n_steps} steps exceed the budget of {cfg.max_events}")

    eta, jump = cfg.lipschitz_probe, cfg.lipschitz_jump

    def probe(g, v, info, p):
        if not isinstance(g, CallableStrategy):
            return
        shifted = [Information(info.theta + eta, info.exit_times, info.model, info.active)]
        if info.exit_times is not None:
            shifted.append(Information(info.theta, info.exit_times + eta, info.model, info.active))
        for alt in shifted:
            q = g.proportions(v, alt)
            if float(np.max(np.abs(q - p))) > jump:
                raise NonLipschitzDetected(
                    f"strategy of {g.player} at node {v} jumps right after theta={info.theta}")

    for k in range(n_steps):
        a = k * h
        b = H if k == n_steps - 1 else min(H, (k + 1) * h)
        st.events += 1
        info = st.information(a)
        x = st.inflow_rates(a, info, probe)
        st.commit(a, b, x)
    flow = st.finish(FIXED_STEP)
    flow.meta["step"] = h
    return flow


# -- replay ------------------------------------------------------------------------------------

def cumulative_deviation(f: FlowOverTime, g: FlowOverTime) -> float:
    """Sup-norm distance of cumulative inflows and outflows over all edge-player pairs."""
    worst = 0.0
    for key in f.inflow:
        for a, b in ((f.inflow[key], g.inflow[key]), (f.outflow[key], g.outflow[key])):
            worst = max(worst, a.integrate().sup_distance(b.integrate()))
    return worst


FIXED_STEPS = (1e-1, 1e-2, 1e-3)
CONVERGED_FLOOR = 1e-9


@dataclass
class ReplayReport:
    """Outcome of re-running a profile with perturbed tie order and with the fixed-step solver."""

    event_deviation: float
    fixed_errors: dict[float, float]
    ratios: list[float]
    monotone: bool
    first_order: bool
    agree_tol: float = 1e-7
    events: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.event_deviation <= self.agree_tol and self.monotone

    @property
    def max_deviation(self) -> float:
        return max([self.event_deviation, *self.fixed_errors.values()])


def _ratio_ok(coarse: float, fine: float, lo: float = 5.0, hi: float = 15.0) -> bool:
    # an exact scheme (both errors at rounding level) has nothing left to converge
    if coarse <= CONVERGED_FLOOR and fine <= CONVERGED_FLOOR:
        return True
    if fine <= CONVERGED_FLOOR:
        return False
    return lo <= coarse / fine <= hi


def replay_uniqueness_check(instance: Instance, profile: dict[str, Strategy],
                            steps=FIXED_STEPS, config: SimConfig | None = None) -> ReplayReport:
    """Run the event-driven solver twice (forward and reverse tie order) and the fixed-step
    solver at the given step sizes; compare cumulative flows.

    PASS requires the two event-driven runs to agree within ``1e-7`` and the
    fixed-step error to decrease monotonically as ``h`` shrinks.
    ``first_order`` additionally reports whether each tenfold refinement
    shrinks the error by a factor in ``[5, 15]``.
    """
    cfg = config or SimConfig()
    ref = simulate(instance, profile, replace(cfg, mode=EVENT_DRIVEN, tie_order="forward"))
    rev = simulate(instance, profile, replace(cfg, mode=EVENT_DRIVEN, tie_order="reverse"))
    dev = cumulative_deviation(ref, rev)
    errors = {}
    for h in steps:
        fx = simulate_fixed_step(instance, profile, replace(cfg, mode=FIXED_STEP, step=h))
        errors[h] = cumulative_deviation(ref, fx)
    errs = [errors[h] for h in steps]
    monotone = all(e2 <= e1 or e1 <= CONVERGED_FLOOR for e1, e2 in zip(errs, errs[1:]))
    ratios = [e1 / e2 if e2 > 0 else math.inf for e1, e2 in zip(errs, errs[1:])]
    first = all(_ratio_ok(e1, e2) for e1, e2 in zip(errs, errs[1:]))
    return ReplayReport(dev, errors, ratios, monotone, first, events=ref.events)
