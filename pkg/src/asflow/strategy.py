"""Strategies: maps from the information a player receives to routing proportions.

A strategy tells, for every node ``v`` other than the player's destination,
which fraction of the player's flow arriving at ``v`` enters each outgoing
edge. Two information models exist: the current time only, or the current
time together with the exit times of all edges. Strategies are data
(tables and builtins) so that they serialize and replay deterministically;
:class:`CallableStrategy` is an escape hatch for the fixed-step simulator.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import HypothesesViolated, MalformedRule, ModelMismatch, NotParallel, NotTwoParallel
from .instance import Instance

TIME_ONLY = "time_only"
EXIT_TIMES = "time_and_exit_times"

SUM_TOL = 1e-9


@dataclass(frozen=True)
class Information:
    """What a player sees at time ``theta``.

    ``exit_times`` is indexed like ``instance.edges`` and is ``None`` under
    the time-only model. ``active`` optionally carries the active edge set
    already decided by the simulator (it must agree with ``exit_times``).
    """

    theta: float
    exit_times: np.ndarray | None = None
    model: str = TIME_ONLY
    active: frozenset | None = None

    @classmethod
    def time_only(cls, theta: float) -> "Information":
        return cls(float(theta))

    @classmethod
    def with_exit_times(cls, theta: float, exit_times, active: frozenset | None = None) -> "Information":
        return cls(float(theta), np.asarray(exit_times, dtype=float), EXIT_TIMES, active)


def active_edges(exit_times, horizon: float, instance: Instance | None = None) -> frozenset:
    """Edges whose particles still arrive before the horizon: ``T_e < H`` (strict).

    Returns edge ids when ``instance`` is given, otherwise edge indices.
    """
    T = np.asarray(exit_times, dtype=float)
    idx = np.flatnonzero(T < horizon)
    if instance is None:
        return frozenset(int(i) for i in idx)
    return frozenset(instance.edges[i].id for i in idx)


def _active_ids(info: Information, instance: Instance) -> frozenset:
    if info.active is not None:
        return info.active
    if info.exit_times is None:
        raise ModelMismatch("strategy needs exit times but received time-only information")
    return active_edges(info.exit_times, instance.horizon, instance)


class Strategy:
    """Base class. Subclasses implement :meth:`_raw_proportions`."""

    model = TIME_ONLY

    def __init__(self, instance: Instance, player: str):
        self.instance = instance
        self.player = player
        self._dest = instance.player(player).destination

    def proportions(self, node: str, info: Information) -> np.ndarray:
        """Simplex point over ``instance.out_edges(node)``."""
        return evaluate(self, node, info)

    def _raw_proportions(self, node: str, info: Information) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        """Times at which the strategy may change regardless of the flow."""
        return np.empty(0)

    def next_breakpoint(self, theta: float) -> float:
        bp = self.breakpoints()
        k = int(np.searchsorted(bp, theta, side="right"))
        return float(bp[k]) if k < len(bp) else math.inf

    def to_dict(self) -> dict:
        raise TypeError(f"{type(self).__name__} is not serializable")


def evaluate(g: Strategy, node: str, info: Information) -> np.ndarray:
    """Evaluate ``g`` at ``node``; the result is non-negative and sums to 1."""
    if node == g._dest:
        raise ValueError(f"player {g.player} has no routing decision at its destination {node}")
    if g.model == EXIT_TIMES and info.model == TIME_ONLY and info.active is None:
        raise ModelMismatch(f"strategy of {g.player} needs exit-time information")
    outs = g.instance.out_edges(node)
    if len(outs) == 0:
        raise MalformedRule(f"player {g.player}: node {node} has no outgoing edge")
    if len(outs) == 1:
        return np.ones(1)
    p = np.asarray(g._raw_proportions(node, info), dtype=float)
    return _normalize(p, f"player {g.player} at node {node}, theta={info.theta}")


def _normalize(p: np.ndarray, where: str) -> np.ndarray:
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise MalformedRule(f"{where}: proportions must be finite and >= 0, got {p.tolist()}")
    s = math.fsum(p)
    if abs(s - 1.0) > SUM_TOL:
        raise MalformedRule(f"{where}: proportions sum to {s}, not 1")
    return p / s


# -- tables ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Row:
    """Proportions used on ``[start, end)``; ``when_active`` restricts the row
    to times where the active outgoing edges of the node are exactly that set."""

    start: float
    end: float
    proportions: Mapping[str, float]
    when_active: frozenset | None = None

    def to_dict(self) -> dict:
        from .instance import _num
        d = {"from": _num(self.start), "to": _num(self.end),
             "proportions": {k: _num(v) for k, v in sorted(self.proportions.items())}}
        if self.when_active is not None:
            d["when_active"] = sorted(self.when_active)
        return d


@dataclass
class _Group:
    starts: list = field(default_factory=list)
    rows: list = field(default_factory=list)


class TableStrategy(Strategy):
    """Piecewise-constant proportion schedules, optionally keyed on the active set.

    For a given node, rows sharing the same ``when_active`` key must not
    overlap in time. At evaluation a row whose key equals the current active
    set is preferred; rows without a key act as the default.
    """

    def __init__(self, instance: Instance, player: str, tables: Mapping[str, Iterable[Row]]):
        super().__init__(instance, player)
        self.tables: dict[str, tuple[Row, ...]] = {}
        self._groups: dict[str, dict] = {}
        has_pred = False
        bps = set()
        for node, rows in tables.items():
            rows = tuple(sorted(rows, key=lambda r: (r.start, r.end)))
            if node not in instance.nodes:
                raise MalformedRule(f"unknown node {node!r}")
            out_ids = [instance.edges[i].id for i in instance.out_edges(node)]
            groups: dict = {}
            for r in rows:
                if not r.end > r.start:
                    raise MalformedRule(f"node {node}: empty row interval [{r.start}, {r.end})")
                extra = set(r.proportions) - set(out_ids)
                if extra:
                    raise MalformedRule(f"node {node}: {sorted(extra)} are not outgoing edges")
                if r.when_active is not None:
                    has_pred = True
                    if not set(r.when_active) <= set(out_ids):
                        raise MalformedRule(f"node {node}: when_active lists non-outgoing edges")
                vec = np.array([r.proportions.get(e, 0.0) for e in out_ids], dtype=float)
                _normalize(vec, f"node {node} row [{r.start}, {r.end})")
                grp = groups.setdefault(r.when_active, _Group())
                if grp.rows and grp.rows[-1][0].end > r.start:
                    raise MalformedRule(f"node {node}: overlapping rows at {r.start}")
                grp.starts.append(r.start)
                grp.rows.append((r, vec))
                bps.update((r.start, r.end))
            self.tables[node] = rows
            self._groups[node] = groups
        self.model = EXIT_TIMES if has_pred else TIME_ONLY
        self._bps = np.array(sorted(bps), dtype=float)

    def breakpoints(self) -> np.ndarray:
        return self._bps

    def _lookup(self, grp: _Group | None, theta: float):
        if grp is None:
            return None
        k = bisect.bisect_right(grp.starts, theta) - 1
        if k >= 0 and grp.rows[k][0].end > theta:
            return grp.rows[k][1]
        return None

    def _raw_proportions(self, node: str, info: Information) -> np.ndarray:
        groups = self._groups.get(node)
        if groups is None:
            raise MalformedRule(f"player {self.player}: no rule for node {node}")
        vec = None
        if self.model == EXIT_TIMES:
            out_ids = {self.instance.edges[i].id for i in self.instance.out_edges(node)}
            key = _active_ids(info, self.instance) & out_ids
            vec = self._lookup(groups.get(frozenset(key)), info.theta)
        if vec is None:
            vec = self._lookup(groups.get(None), info.theta)
        if vec is None:
            raise MalformedRule(f"player {self.player}: no row for node {node} at theta={info.theta}")
        return vec

    def is_time_only(self) -> bool:
        return self.model == TIME_ONLY

    def to_dict(self) -> dict:
        return {"table": {node: [r.to_dict() for r in rows] for node, rows in sorted(self.tables.items())}}


class EquilibriumStrategy(Strategy):
    """Route proportionally to the capacities of the active edges.

    If no edge is active any more, route proportionally to all capacities.
    Only defined on parallel-edge instances.
    """

    model = EXIT_TIMES

    def __init__(self, instance: Instance, player: str):
        if not instance.is_parallel():
            raise NotParallel("the capacity-proportional strategy needs a parallel-edge instance")
        super().__init__(instance, player)
        self._caps = np.array([e.capacity for e in instance.edges])
        self._ids = instance.edge_ids

    def _raw_proportions(self, node: str, info: Information) -> np.ndarray:
        active = _active_ids(info, self.instance)
        mask = np.array([e in active for e in self._ids])
        w = self._caps * mask if mask.any() else self._caps
        return w / w.sum()

    def to_dict(self) -> dict:
        return {"builtin": "equilibrium"}


class CallableStrategy(Strategy):
    """Programmatic hook: ``fn(node, info)`` returns proportions over ``out_edges(node)``.

    Usable with the fixed-step simulator only, and excluded from equilibrium claims.
    """

    def __init__(self, instance: Instance, player: str, fn: Callable, model: str = EXIT_TIMES):
        super().__init__(instance, player)
        self.fn = fn
        self.model = model

    def _raw_proportions(self, node: str, info: Information) -> np.ndarray:
        res = self.fn(node, info)
        if isinstance(res, Mapping):
            ids = [self.instance.edges[i].id for i in self.instance.out_edges(node)]
            return np.array([res.get(e, 0.0) for e in ids], dtype=float)
        return np.asarray(res, dtype=float)


# -- constructors -----------------------------------------------------------------------

def make_equilibrium_strategy(instance: Instance, player: str) -> EquilibriumStrategy:
    return EquilibriumStrategy(instance, player)


def make_time_only_strategy(instance: Instance, player: str, tables: Mapping[str, Iterable]) -> TableStrategy:
    """Table strategy from ``{node: [(start, end, {edge_id: p}), ...]}`` (or :class:`Row` objects)."""
    rows = {}
    for node, entries in tables.items():
        rows[node] = [e if isinstance(e, Row) else Row(float(e[0]), float(e[1]), dict(e[2])) for e in entries]
        if any(r.when_active is not None for r in rows[node]):
            raise MalformedRule("time-only strategies cannot use when_active predicates")
    return TableStrategy(instance, player, rows)


def constant_strategy(instance: Instance, player: str, proportions: Mapping[str, float],
                      node: str | None = None) -> TableStrategy:
    node = node or instance.player(player).origin
    return make_time_only_strategy(instance, player, {node: [(0.0, instance.horizon, proportions)]})


def _two_parallel(instance: Instance) -> tuple[str, str]:
    if not instance.is_parallel() or len(instance.edges) != 2:
        raise NotTwoParallel("need a network of exactly two parallel edges")
    return instance.edges[0].id, instance.edges[1].id


def _other_player(instance: Instance, player: str) -> str:
    others = [p for p in instance.player_ids if p != player]
    if len(others) != 1:
        raise HypothesesViolated("need exactly two players")
    return others[0]


def two_edge_schedule(g: TableStrategy) -> list[tuple[float, float, float]]:
    """``(start, end, share of the first edge)`` pieces of a time-only two-edge strategy."""
    e1, e2 = _two_parallel(g.instance)
    if not isinstance(g, TableStrategy) or not g.is_time_only():
        raise HypothesesViolated("opponent strategy must be a time-only table")
    s, _ = g.instance.terminals()
    rows = g.tables.get(s, ())
    out = []
    for r in rows:
        p1, p2 = r.proportions.get(e1, 0.0), r.proportions.get(e2, 0.0)
        out.append((r.start, r.end, p1 / (p1 + p2)))
    return out


def mirror_strategy(opponent: TableStrategy, player: str | None = None) -> TableStrategy:
    """Copy a time-only two-edge strategy with the roles of the edges swapped."""
    inst = opponent.instance
    e1, e2 = _two_parallel(inst)
    if not isinstance(opponent, TableStrategy) or not opponent.is_time_only():
        raise MalformedRule("only time-only table strategies can be mirrored")
    player = player or _other_player(inst, opponent.player)
    swap = {e1: e2, e2: e1}
    tables = {node: [Row(r.start, r.end, {swap[e]: p for e, p in r.proportions.items()})
                     for r in rows] for node, rows in opponent.tables.items()}
    return TableStrategy(inst, player, tables)


def random_time_only_strategy(rng, instance: Instance, player: str, max_breakpoints: int = 6) -> TableStrategy:
    """Random time-only schedule at the player's origin with at most ``max_breakpoints`` interior changes."""
    H = instance.horizon
    node = instance.player(player).origin
    out_ids = [instance.edges[i].id for i in instance.out_edges(node)]
    k = int(rng.integers(0, max_breakpoints + 1))
    cuts = np.sort(rng.uniform(0.0, H, size=k))
    times = np.concatenate(([0.0], cuts, [H]))
    rows = []
    for a, b in zip(times[:-1], times[1:]):
        if b <= a:
            continue
        w = rng.dirichlet(np.ones(len(out_ids)))
        rows.append(Row(float(a), float(b), {e: float(x) for e, x in zip(out_ids, w)}))
    return TableStrategy(instance, player, {node: rows})


# -- best response against time-only opponents ----------------------------------------------

@dataclass
class MirrorShiftResponse:
    """The response built against a time-only opponent on two identical parallel edges.

    ``r`` is the common last-entry time under pure mirroring. ``r_hat_1`` and
    ``r_hat_2`` are the last-entry times of the (relabeled) first and second
    edge once ``delta`` units have been moved, before the responder starts
    pumping into the first edge; ``realized_r`` holds the last-entry times
    under the final response.
    """

    strategy: TableStrategy
    epsilon: float
    delta: float
    r: float
    r_hat_1: float
    r_hat_2: float
    first_edge: str
    second_edge: str
    payoff: float
    opt: float
    margin: float
    realized_r: dict[str, float]
    shift_strategy: TableStrategy
    mirror: TableStrategy


def check_two_player_hypotheses(instance: Instance) -> None:
    """Two identical parallel edges, two identical players, capacity below supply, transit below horizon."""
    try:
        e1, e2 = _two_parallel(instance)
    except NotParallel as exc:
        raise HypothesesViolated(str(exc)) from exc
    if len(instance.players) != 2:
        raise HypothesesViolated("need exactly two players")
    a, b = instance.edges
    p, q = instance.players
    if a.capacity != b.capacity:
        raise HypothesesViolated("edge capacities differ")
    if a.transit != b.transit:
        raise HypothesesViolated("edge transit times differ")
    if p.rate != q.rate:
        raise HypothesesViolated("supply rates differ")
    if not a.capacity < p.rate:
        raise HypothesesViolated("capacity must be strictly below the supply rate")
    if not a.transit < instance.horizon:
        raise HypothesesViolated("transit time must be below the horizon")


def mirror_shift_response(opponent: TableStrategy, instance: Instance | None = None) -> MirrorShiftResponse:
    """Build a time-only response that earns strictly more than half the optimum.

    Start from the mirror of the opponent. Label the edges so that on the last
    opponent piece before ``r`` the opponent sends at most half its supply into
    the first edge, move ``delta`` units of the responder's first-edge flow to
    the second edge before ``r - epsilon``, and from the new last-entry time of
    the second edge on send everything into the first edge.
    """
    from .analysis import compute_r, payoff, system_optimum_parallel
    from .engine import simulate

    inst = instance or opponent.instance
    check_two_player_hypotheses(inst)
    if not isinstance(opponent, TableStrategy) or not opponent.is_time_only():
        raise HypothesesViolated("opponent strategy must be a time-only table")
    responder = _other_player(inst, opponent.player)
    ea, eb = inst.edge_ids
    s, _ = inst.terminals()
    H = inst.horizon
    nu, tau = inst.edges[0].capacity, inst.edges[0].transit
    d = inst.players[0].rate

    sched = two_edge_schedule(opponent)
    if not sched or sched[0][0] > 0 or sched[-1][1] < H or any(
            b0 != a1 for (_, b0, _), (a1, _, _) in zip(sched[:-1], sched[1:])):
        raise HypothesesViolated("opponent schedule must cover [0, H) without gaps")

    # under pure mirroring both edges receive d > nu from time 0 on
    r = (H - tau) * nu / d
    last = max(k for k, (a, _, _) in enumerate(sched) if a < r)
    start_last, _, share_last = sched[last]
    if share_last <= 0.5:
        first, second = ea, eb
        alpha = [(a, b, x) for a, b, x in sched]
    else:
        first, second = eb, ea
        alpha = [(a, b, 1.0 - x) for a, b, x in sched]
    epsilon = r - start_last

    def responder_first_volume(upto: float) -> float:
        return math.fsum(d * (1.0 - x) * max(0.0, min(b, upto) - a) for a, b, x in alpha)

    volume = responder_first_volume(r - epsilon)
    while volume <= 0.0:
        epsilon *= 0.5
        volume = responder_first_volume(r - epsilon)

    # the 1/2 keeps every strict inequality of the construction strict in floating point
    keep_queue = (d - nu) / d
    delta = 0.5 * min(epsilon * nu, volume * keep_queue)
    lam = delta / volume
    window_end = r - epsilon

    def build(pump_from: float | None) -> TableStrategy:
        rows = []
        stop = H if pump_from is None else pump_from
        for a, b, x in alpha:
            for lo, hi, p_first in ((a, min(b, window_end), (1.0 - x) * (1.0 - lam)),
                                    (max(a, window_end), min(b, stop), 1.0 - x)):
                if hi > lo:
                    rows.append(Row(lo, hi, {first: p_first, second: 1.0 - p_first}))
        if pump_from is not None:
            rows.append(Row(pump_from, H, {first: 1.0, second: 0.0}))
        return TableStrategy(inst, responder, {s: _merge_rows(rows)})

    # the new last-entry times depend on the inflow near r, so read them off a simulation
    shifted = build(None)
    flow_shift = simulate(inst, {opponent.player: opponent, responder: shifted})
    r_hat_1 = compute_r(flow_shift, first)
    r_hat_2 = compute_r(flow_shift, second)
    response = build(r_hat_2)

    flow = simulate(inst, {opponent.player: opponent, responder: response})
    opt = system_optimum_parallel(inst)
    value = payoff(flow, responder)
    return MirrorShiftResponse(
        strategy=response, epsilon=epsilon, delta=delta, r=r,
        r_hat_1=r_hat_1, r_hat_2=r_hat_2, first_edge=first, second_edge=second,
        payoff=value, opt=opt, margin=value - opt / 2,
        realized_r={e: compute_r(flow, e) for e in inst.edge_ids},
        shift_strategy=shifted, mirror=mirror_strategy(opponent, responder))


def _merge_rows(rows: list[Row]) -> list[Row]:
    out: list[Row] = []
    for r in sorted(rows, key=lambda r: r.start):
        if out and out[-1].end == r.start and dict(out[-1].proportions) == dict(r.proportions):
            out[-1] = Row(out[-1].start, r.end, out[-1].proportions)
        else:
            out.append(r)
    return out


# -- serialization --------------------------------------------------------------------------

def strategy_to_dict(g: Strategy) -> dict:
    return g.to_dict()


def strategy_from_dict(data: Mapping, instance: Instance, player: str) -> Strategy:
    """Rebuild a strategy for ``player``; nested opponents belong to the other player."""
    from .errors import ParseError

    if not isinstance(data, Mapping):
        raise ParseError("strategy must be a JSON object")
    if "builtin" in data:
        name = data["builtin"]
        if name == "equilibrium":
            return EquilibriumStrategy(instance, player)
        if name in ("mirror", "mirror_shift"):
            if "opponent" not in data:
                raise ParseError("missing opponent strategy", field="opponent")
            opp = strategy_from_dict(data["opponent"], instance, _other_player(instance, player))
            if name == "mirror":
                return mirror_strategy(opp, player)
            return mirror_shift_response(opp, instance).strategy
        raise ParseError(f"unknown builtin {name!r}", field="builtin")
    if "table" in data:
        table = data["table"]
        if not isinstance(table, Mapping):
            raise ParseError("table must map node ids to row lists", field="table")
        tables = {}
        for node, rows in table.items():
            parsed = []
            for i, raw in enumerate(rows):
                where = f"table.{node}[{i}]"
                try:
                    wa = raw.get("when_active")
                    parsed.append(Row(float(raw["from"]), float(raw["to"]),
                                      {str(k): float(v) for k, v in raw["proportions"].items()},
                                      None if wa is None else frozenset(wa)))
                except (KeyError, TypeError, ValueError, AttributeError) as exc:
                    raise ParseError(f"bad row: {exc}", field=where) from exc
            tables[node] = parsed
        return TableStrategy(instance, player, tables)
    raise ParseError("strategy needs either 'builtin' or 'table'")
