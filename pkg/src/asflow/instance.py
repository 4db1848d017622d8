"""Game instances: network, players and horizon, plus JSON file I/O.

Instances are immutable. Nodes, edges and players are kept sorted by id, which
fixes the dense integer index used internally (``edge_index``, ``node_index``)
and makes serialization canonical.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InvalidInstance, ParseError, SchemaVersionMismatch, Violation

SCHEMA_VERSION = 1

GENERAL = "general"
PARALLEL = "parallel"


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    transit: float
    capacity: float


@dataclass(frozen=True)
class Player:
    id: str
    origin: str
    destination: str
    rate: float


@dataclass(frozen=True)
class Instance:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    players: tuple[Player, ...]
    horizon: float
    kind: str | None = None  # set by validate_instance

    # derived lookup tables, not part of equality
    _node_index: dict = field(default=None, init=False, repr=False, compare=False)
    _edge_index: dict = field(default=None, init=False, repr=False, compare=False)
    _out: dict = field(default=None, init=False, repr=False, compare=False)
    _in: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.id)))
        object.__setattr__(self, "players", tuple(sorted(self.players, key=lambda p: p.id)))
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "_node_index", {v: i for i, v in enumerate(self.nodes)})
        object.__setattr__(self, "_edge_index", {e.id: i for i, e in enumerate(self.edges)})
        out: dict[str, list[int]] = {v: [] for v in self.nodes}
        inc: dict[str, list[int]] = {v: [] for v in self.nodes}
        for i, e in enumerate(self.edges):
            out.setdefault(e.tail, []).append(i)
            inc.setdefault(e.head, []).append(i)
        object.__setattr__(self, "_out", {v: tuple(ix) for v, ix in out.items()})
        object.__setattr__(self, "_in", {v: tuple(ix) for v, ix in inc.items()})

    # -- lookups -------------------------------------------------------------

    def edge_index(self, edge_id: str) -> int:
        return self._edge_index[edge_id]

    def node_index(self, node: str) -> int:
        return self._node_index[node]

    def edge(self, edge_id: str) -> Edge:
        return self.edges[self._edge_index[edge_id]]

    def player(self, player_id: str) -> Player:
        for p in self.players:
            if p.id == player_id:
                return p
        raise KeyError(player_id)

    def player_index(self, player_id: str) -> int:
        for i, p in enumerate(self.players):
            if p.id == player_id:
                return i
        raise KeyError(player_id)

    def out_edges(self, node: str) -> tuple[int, ...]:
        """Indices of the edges leaving ``node`` (sorted by edge id)."""
        return self._out.get(node, ())

    def in_edges(self, node: str) -> tuple[int, ...]:
        return self._in.get(node, ())

    @property
    def edge_ids(self) -> list[str]:
        return [e.id for e in self.edges]

    @property
    def player_ids(self) -> list[str]:
        return [p.id for p in self.players]

    @property
    def total_supply(self) -> float:
        return math.fsum(p.rate for p in self.players)

    def is_parallel(self) -> bool:
        return _parallel_terminals(self) is not None

    def terminals(self) -> tuple[str, str]:
        """Common (source, sink) of a parallel instance."""
        st = _parallel_terminals(self)
        if st is None:
            raise ValueError("instance is not a parallel-edge instance")
        return st

    def with_edges(self, edges: Iterable[Edge]) -> "Instance":
        return replace(self, edges=tuple(edges))

    def with_players(self, players: Iterable[Player]) -> "Instance":
        return replace(self, players=tuple(players))


def _parallel_terminals(inst: Instance) -> tuple[str, str] | None:
    if not inst.edges or not inst.players:
        return None
    s, t = inst.edges[0].tail, inst.edges[0].head
    if s == t:
        return None
    if any(e.tail != s or e.head != t for e in inst.edges):
        return None
    if any(p.origin != s or p.destination != t for p in inst.players):
        return None
    return s, t


def _reachable(inst: Instance, source: str) -> set[str]:
    seen = {source}
    todo = deque([source])
    while todo:
        v = todo.popleft()
        for i in inst.out_edges(v):
            w = inst.edges[i].head
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def validate_instance(raw: Instance) -> Instance:
    """Check the model assumptions and classify the instance kind.

    Returns a copy with ``kind`` set to ``"parallel"`` or ``"general"``.
    Raises :class:`InvalidInstance` listing every violation otherwise.
    """
    problems: list[Violation] = []
    if not raw.horizon > 0 or not math.isfinite(raw.horizon):
        problems.append(Violation("NonPositiveHorizon", f"horizon {raw.horizon!r} must be > 0"))

    for what, ids in (("node", list(raw.nodes)),
                      ("edge", [e.id for e in raw.edges]),
                      ("player", [p.id for p in raw.players])):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            problems.append(Violation("DuplicateId", f"duplicate {what} ids: {dup}"))

    nodes = set(raw.nodes)
    for e in raw.edges:
        if not (e.capacity > 0) or not math.isfinite(e.capacity):
            problems.append(Violation("NonPositiveCapacity", f"edge {e.id}: capacity {e.capacity!r}"))
        if not (e.transit >= 0) or not math.isfinite(e.transit):
            problems.append(Violation("NegativeTransit", f"edge {e.id}: transit {e.transit!r}"))
        for end in (e.tail, e.head):
            if end not in nodes:
                problems.append(Violation("UnknownNode", f"edge {e.id}: node {end!r} not declared"))
    for p in raw.players:
        if not (p.rate > 0) or not math.isfinite(p.rate):
            problems.append(Violation("NonPositiveSupply", f"player {p.id}: rate {p.rate!r}"))
        for end in (p.origin, p.destination):
            if end not in nodes:
                problems.append(Violation("UnknownNode", f"player {p.id}: node {end!r} not declared"))

    if not any(v.code == "UnknownNode" for v in problems):
        for p in raw.players:
            if p.destination not in _reachable(raw, p.origin):
                problems.append(Violation(
                    "UnreachableDestination", f"player {p.id}: {p.destination} unreachable from {p.origin}"))

    kind = PARALLEL if _parallel_terminals(raw) is not None else GENERAL
    if kind == GENERAL:
        for e in raw.edges:
            if e.transit == 0:
                problems.append(Violation(
                    "ZeroTransitOnGeneral", f"edge {e.id}: zero transit time needs a parallel-edge instance"))

    if problems:
        raise InvalidInstance(problems)
    return replace(raw, kind=kind)


# -- file format -----------------------------------------------------------------

def _num(x: float) -> float | int:
    """Shortest round-trip number; integral values are written without '.0'."""
    x = float(x)
    if x.is_integer() and abs(x) < 2 ** 53:
        return int(x)
    return x


def instance_to_dict(inst: Instance) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "horizon": _num(inst.horizon),
        "nodes": list(inst.nodes),
        "edges": [{"id": e.id, "tail": e.tail, "head": e.head,
                   "transit": _num(e.transit), "capacity": _num(e.capacity)} for e in inst.edges],
        "players": [{"id": p.id, "origin": p.origin, "destination": p.destination,
                     "rate": _num(p.rate)} for p in inst.players],
    }


def dumps_instance(inst: Instance) -> str:
    # nodes/edges/players are already sorted by id in the dataclass
    return json.dumps(instance_to_dict(inst), indent=2, ensure_ascii=False) + "\n"


def _require(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"missing required field", field=f"{where}{key}")
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ParseError(f"expected a number, got {val!r}", field=f"{where}{key}")
        return float(val)
    if not isinstance(val, kind):
        raise ParseError(f"expected {kind.__name__}, got {type(val).__name__}", field=f"{where}{key}")
    return val


def instance_from_dict(data: dict) -> Instance:
    if not isinstance(data, dict):
        raise ParseError("top level must be a JSON object")
    version = data.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})",
                                    field="version")
    horizon = _require(data, "horizon", float, "")
    nodes = _require(data, "nodes", list, "")
    for i, v in enumerate(nodes):
        if not isinstance(v, str):
            raise ParseError("node ids must be strings", field=f"nodes[{i}]")
    edges = []
    for i, e in enumerate(_require(data, "edges", list, "")):
        w = f"edges[{i}]."
        edges.append(Edge(_require(e, "id", str, w), _require(e, "tail", str, w), _require(e, "head", str, w),
                          _require(e, "transit", float, w), _require(e, "capacity", float, w)))
    players = []
    for i, p in enumerate(_require(data, "players", list, "")):
        w = f"players[{i}]."
        players.append(Player(_require(p, "id", str, w), _require(p, "origin", str, w),
                              _require(p, "destination", str, w), _require(p, "rate", float, w)))
    return Instance(tuple(nodes), tuple(edges), tuple(players), horizon)


def loads_instance(text: str, validate: bool = True) -> Instance:
    if not text.strip():
        raise ParseError("empty instance file", line=1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    inst = instance_from_dict(data)
    return validate_instance(inst) if validate else inst


def load_instance(path: str | Path, validate: bool = True) -> Instance:
    return loads_instance(Path(path).read_text(encoding="utf-8"), validate=validate)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


# -- convenience constructors ----------------------------------------------------

def parallel_instance(capacities, transits, rates, horizon: float,
                      source: str = "s", sink: str = "t", validate: bool = True) -> Instance:
    """Parallel-edge instance with edges ``e1..em`` and players ``p1..pk``."""
    if len(capacities) != len(transits):
        raise ValueError("capacities and transits differ in length")
    width_e = len(str(len(capacities)))
    width_p = len(str(len(rates)))
    edges = [Edge(f"e{i + 1:0{width_e}d}", source, sink, float(tau), float(nu))
             for i, (nu, tau) in enumerate(zip(capacities, transits))]
    players = [Player(f"p{j + 1:0{width_p}d}", source, sink, float(d)) for j, d in enumerate(rates)]
    inst = Instance((source, sink), tuple(edges), tuple(players), float(horizon))
    return validate_instance(inst) if validate else inst


def fig2_instance() -> Instance:
    """Two identical parallel edges (capacity 2, transit 1), two players of rate 4, horizon 21."""
    return parallel_instance([2, 2], [1, 1], [4, 4], 21)


def random_parallel_instance(rng, n_edges=(2, 6), n_players=(1, 4), regime: str | None = None,
                             zero_transit_prob: float = 0.25) -> Instance:
    """Sample a parallel-edge instance.

    ``regime`` forces the total supply relative to the total capacity:
    ``"saturated"`` (supply >= capacity), ``"free"`` (supply < capacity with
    all transit times zero) or ``"staged"`` (supply < capacity, mixed transit
    times). ``None`` picks one uniformly.
    """
    m = int(rng.integers(n_edges[0], n_edges[1] + 1))
    k = int(rng.integers(n_players[0], n_players[1] + 1))
    if regime is None:
        regime = ("saturated", "free", "staged")[int(rng.integers(0, 3))]
    horizon = float(np.round(rng.uniform(5, 30), 3))
    caps = np.round(rng.uniform(0.5, 4.0, size=m), 3)
    if regime == "free":
        taus = np.zeros(m)
    else:
        taus = np.round(rng.uniform(0.0, 0.8 * horizon, size=m), 3)
        taus[rng.random(m) < zero_transit_prob] = 0.0
    if regime == "staged" and np.all(taus == 0):
        taus[0] = np.round(0.5 * horizon, 3)
    weights = rng.uniform(0.2, 1.0, size=k)
    if regime == "saturated":
        total = caps.sum() * rng.uniform(1.0, 2.5)
    else:
        total = caps.sum() * rng.uniform(0.2, 0.95)
    rates = np.round(total * weights / weights.sum(), 4)
    rates = np.maximum(rates, 1e-3)
    if regime == "saturated" and rates.sum() < caps.sum():
        rates = rates * (caps.sum() / rates.sum()) * 1.0001
    return parallel_instance(caps.tolist(), taus.tolist(), rates.tolist(), horizon)

