"""Deterministic queuing on a single edge.

An edge with capacity ``nu`` and transit time ``tau`` keeps a point queue of
volume ``z``. While the queue is non-empty (or the inflow exceeds the
capacity) the edge releases flow at rate ``nu``; otherwise outflow equals the
inflow delayed by ``tau``. Particles leave in FIFO order, so a player's share
of the outflow at ``theta`` equals its share of the inflow at the latest time
``phi`` with exit time ``T(phi) = theta``.

:class:`EdgeQueue` is the incremental kernel used by the simulators; the
module-level functions apply it to whole step functions and audit a finished
flow over time.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instance import Edge, Instance
from .timeseries import EPS_TIME, BreakpointFunction, StepFunction, _merge_times


def exit_time(theta: float, queue: float, edge: Edge) -> float:
    """Exit time of a particle entering ``edge`` at ``theta`` behind ``queue`` volume."""
    return theta + queue / edge.capacity + edge.transit


def waiting_time(theta: float, queue: float, edge: Edge) -> float:
    return queue / edge.capacity


class EdgeQueue:
    """Queue state of one edge, advanced over intervals of constant inflow.

    Each call to :meth:`advance` commits constant per-player inflow rates on
    ``[theta, b)`` and appends the outflow they cause on ``[T(theta), T(b))``.
    A queue that runs dry inside the interval is handled exactly by splitting
    it at the depletion time; a depletion within ``eps`` of ``b`` is snapped to
    ``b``.
    """

    def __init__(self, capacity: float, transit: float, n_players: int, eps: float = EPS_TIME):
        self.capacity = float(capacity)
        self.transit = float(transit)
        self.n_players = n_players
        self.eps = eps
        self.theta = 0.0
        self.z = 0.0
        self.exit = self.transit
        self.queue_times = [0.0]
        self.queue_values = [0.0]
        # outflow pieces [starts[k], ends[k]) with per-player rates[k]
        self.starts: list[float] = []
        self.ends: list[float] = []
        self.rates: list[np.ndarray] = []
        self._zero = np.zeros(n_players)

    def congested(self, total: float) -> bool:
        return self.z > 0 or total > self.capacity

    def depletion_time(self, total: float) -> float:
        if self.z > 0 and total < self.capacity:
            return self.theta + self.z / (self.capacity - total)
        return math.inf

    def exit_slope(self, total: float) -> float:
        """Slope of the exit-time function under constant total inflow."""
        return total / self.capacity if self.congested(total) else 1.0

    def _emit(self, start: float, end: float, rates: np.ndarray):
        if end <= start:
            return
        if self.rates and self.ends[-1] == start and np.array_equal(self.rates[-1], rates):
            self.ends[-1] = end
            return
        self.starts.append(start)
        self.ends.append(end)
        self.rates.append(rates)

    def advance(self, b: float, rates) -> None:
        x = np.asarray(rates, dtype=float)
        total = math.fsum(x)
        nu, tau = self.capacity, self.transit
        a = self.theta
        while a < b:
            if self.z > 0 or total > nu:
                seg_end, empty = b, False
                if total < nu:
                    td = a + self.z / (nu - total)
                    if td <= b + self.eps:
                        empty = True
                        if td < b - self.eps:
                            seg_end = td
                z = 0.0 if empty else max(0.0, self.z + (total - nu) * (seg_end - a))
                T = max(self.exit, seg_end + z / nu + tau)
                out = nu * x / total if total > 0 else self._zero
                self._emit(self.exit, T, out)
            else:
                seg_end, z = b, 0.0
                T = max(self.exit, b + tau)
                self._emit(self.exit, T, x.copy())
            self.z, self.exit = z, T
            self.queue_times.append(seg_end)
            self.queue_values.append(z)
            a = seg_end
        self.theta = b

    # -- read access to committed outflow --------------------------------------------

    def outflow_at(self, theta: float) -> np.ndarray:
        """Per-player outflow rate at ``theta`` (right limit); zero before any piece."""
        k = bisect.bisect_right(self.starts, theta) - 1
        if k < 0 or theta >= self.ends[k]:
            return self._zero
        return self.rates[k]

    def next_outflow_change(self, theta: float) -> float:
        """First piece boundary strictly after ``theta``, or ``inf`` if none is known yet."""
        k = bisect.bisect_right(self.starts, theta)
        if k > 0 and self.ends[k - 1] > theta:
            return self.ends[k - 1]
        if k < len(self.starts):
            return self.starts[k]
        return math.inf

    def queue_function(self) -> BreakpointFunction:
        return _pl_from_points(self.queue_times, self.queue_values)

    def exit_function(self) -> BreakpointFunction:
        t = np.asarray(self.queue_times)
        z = np.asarray(self.queue_values)
        return _pl_from_points(t, t + z / self.capacity + self.transit)

    def outflow_functions(self, end: float) -> list[StepFunction]:
        """Per-player outflow step functions on ``[0, end)``."""
        out = []
        for j in range(self.n_players):
            pieces = [(s, e, r[j]) for s, e, r in zip(self.starts, self.ends, self.rates)]
            out.append(StepFunction.from_pieces(pieces, 0.0, end))
        return out


def _pl_from_points(times, values) -> BreakpointFunction:
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    # zero-length segments can appear from snapped events; keep the last value
    keep = np.concatenate((t[1:] > t[:-1], [True]))
    return BreakpointFunction(t[keep], v[keep])


def total_outflow(total_inflow: StepFunction, edge: Edge) -> tuple[StepFunction, BreakpointFunction]:
    """Outflow rate and queue length caused by ``total_inflow`` on ``edge``.

    The outflow is returned on the inflow's domain (flow leaving after its
    end is discarded); it is zero before ``edge.transit``.
    """
    q = EdgeQueue(edge.capacity, edge.transit, 1)
    if total_inflow.start != 0.0:
        raise ValueError("inflow must start at time 0")
    for b, val in zip(total_inflow.times[1:], total_inflow.values):
        q.advance(float(b), [val])
    return q.outflow_functions(total_inflow.end)[0], q.queue_function()


def split_outflow(inflows: list[StepFunction], total_out: StepFunction,
                  exit_fn: BreakpointFunction) -> list[StepFunction]:
    """Per-player outflows from the FIFO merge rule.

    The outflow at ``theta`` is divided according to the players' inflow
    shares at ``phi = max T^{-1}(theta)``. Where the total inflow at ``phi`` is
    zero the shares of the preceding interval are used.
    """
    n = len(inflows)
    grid = inflows[0].times
    for f in inflows[1:]:
        grid = np.union1d(grid, f.times)
    mids = 0.5 * (grid[:-1] + grid[1:])
    rates = np.array([f.eval(mids) for f in inflows]).reshape(n, -1)
    totals = rates.sum(axis=0)
    T = exit_fn.eval(np.clip(grid, exit_fn.start, exit_fn.end))

    end = total_out.end
    share_pieces: list[list[tuple[float, float, float]]] = [[] for _ in range(n)]
    prev = np.full(n, 1.0 / n)
    for k in range(len(mids)):
        if totals[k] > 0:
            prev = rates[:, k] / totals[k]
        lo, hi = T[k], T[k + 1]
        if hi > lo:
            for j in range(n):
                share_pieces[j].append((lo, hi, prev[j]))
    out = []
    for j in range(n):
        share = StepFunction.from_pieces(share_pieces[j], 0.0, end, fill=0.0)
        out.append(share * total_out)
    return out


# -- flows over time ----------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeState:
    edge: Edge
    cumulative_inflow: dict[str, BreakpointFunction]
    cumulative_outflow: dict[str, BreakpointFunction]
    queue: BreakpointFunction
    exit_time: BreakpointFunction


@dataclass
class FlowOverTime:
    """Per edge-player inflow and outflow rates on ``[0, H)``.

    ``queue`` and ``exit_time`` are filled in by the simulators; for flows
    built by hand they are derived from the cumulative flows on demand.
    """

    instance: Instance
    inflow: dict[tuple[str, str], StepFunction]
    outflow: dict[tuple[str, str], StepFunction]
    queue: dict[str, BreakpointFunction] = field(default_factory=dict)
    exit_time: dict[str, BreakpointFunction] = field(default_factory=dict)
    events: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, instance: Instance) -> "FlowOverTime":
        """The zero flow: every edge-player rate vanishes on ``[0, H)``."""
        H = instance.horizon
        keys = [(e, p) for e in instance.edge_ids for p in instance.player_ids]
        return cls(instance, {k: StepFunction.zero(0, H) for k in keys}, {k: StepFunction.zero(0, H) for k in keys})

    @property
    def horizon(self) -> float:
        return self.instance.horizon

    def cumulative_inflow(self, edge_id: str, player_id: str) -> BreakpointFunction:
        return self.inflow[edge_id, player_id].integrate()

    def cumulative_outflow(self, edge_id: str, player_id: str) -> BreakpointFunction:
        return self.outflow[edge_id, player_id].integrate()

    def total_inflow(self, edge_id: str) -> StepFunction:
        return _sum_steps([self.inflow[edge_id, p] for p in self.instance.player_ids], self.horizon)

    def total_outflow(self, edge_id: str) -> StepFunction:
        return _sum_steps([self.outflow[edge_id, p] for p in self.instance.player_ids], self.horizon)

    def queue_of(self, edge_id: str) -> BreakpointFunction:
        if edge_id in self.queue:
            return self.queue[edge_id]
        return derived_queue(self, edge_id)

    def exit_time_of(self, edge_id: str) -> BreakpointFunction:
        if edge_id in self.exit_time:
            return self.exit_time[edge_id]
        edge = self.instance.edge(edge_id)
        z = self.queue_of(edge_id)
        return BreakpointFunction(z.times, z.times + z.values / edge.capacity + edge.transit)

    def edge_state(self, edge_id: str) -> EdgeState:
        pids = self.instance.player_ids
        return EdgeState(self.instance.edge(edge_id),
                         {p: self.cumulative_inflow(edge_id, p) for p in pids},
                         {p: self.cumulative_outflow(edge_id, p) for p in pids},
                         self.queue_of(edge_id), self.exit_time_of(edge_id))

    def to_csv_bundle(self, directory: str | Path) -> list[Path]:
        """Write ``inflow_<e>_<p>.csv``, ``outflow_<e>_<p>.csv``, ``queue_<e>.csv``, ``exit_time_<e>.csv``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        for e in self.instance.edge_ids:
            for p in self.instance.player_ids:
                for name, fn in (("inflow", self.inflow[e, p]), ("outflow", self.outflow[e, p])):
                    path = d / f"{name}_{e}_{p}.csv"
                    fn.to_csv(path)
                    written.append(path)
            for name, fn in (("queue", self.queue_of(e)), ("exit_time", self.exit_time_of(e))):
                path = d / f"{name}_{e}.csv"
                fn.to_csv(path)
                written.append(path)
        return written


def _sum_steps(functions: list[StepFunction], end: float) -> StepFunction:
    if not functions:
        return StepFunction.zero(0.0, end)
    grid = functions[0].times
    for f in functions[1:]:
        grid = np.union1d(grid, f.times)
    mids = 0.5 * (grid[:-1] + grid[1:])
    return StepFunction(grid, np.sum([f.eval(mids) for f in functions], axis=0))


def derived_queue(flow: FlowOverTime, edge_id: str) -> BreakpointFunction:
    """``z(theta) = sum F+(theta) - sum F-(theta + tau)`` on ``[0, H - tau]``."""
    edge = flow.instance.edge(edge_id)
    H, tau = flow.horizon, edge.transit
    fin = flow.total_inflow(edge_id).integrate()
    fout = flow.total_outflow(edge_id).integrate()
    top = max(H - tau, 0.0)
    grid = np.union1d(fin.times, fout.times - tau)
    grid = grid[(grid >= 0) & (grid <= top)]
    grid = np.union1d(grid, [0.0, top])
    return BreakpointFunction(grid, fin.eval(grid) - fout.eval(grid + tau), eps=0.0)


# -- feasibility audit ---------------------------------------------------------------------

CONSTRAINTS = ("conservation", "conservation_cumulative", "non_deficit", "capacity", "merge")


@dataclass(frozen=True)
class Finding:
    constraint: str
    subject: str  # node id or edge id
    player: str
    theta: float
    magnitude: float
    interval: tuple[float, float] | None = None


@dataclass
class FeasibilityReport:
    tol: float
    findings: list[Finding] = field(default_factory=list)
    max_by_constraint: dict[str, float] = field(default_factory=lambda: {c: 0.0 for c in CONSTRAINTS})
    worst: dict[str, Finding] = field(default_factory=dict)

    def record(self, f: Finding):
        if f.magnitude > self.max_by_constraint.get(f.constraint, 0.0):
            self.max_by_constraint[f.constraint] = f.magnitude
            self.worst[f.constraint] = f
        if f.magnitude > self.tol:
            self.findings.append(f)

    @property
    def max_violation(self) -> float:
        """Largest pointwise (rate-level or volume-level) violation over all checks."""
        return max(self.max_by_constraint.values())

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.tol

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["constraint", "subject", "player", "theta", "magnitude"])
        for f in self.findings:
            w.writerow([f.constraint, f.subject, f.player, repr(float(f.theta)), repr(float(f.magnitude))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _grid(functions, lo: float, hi: float, shift: float = 0.0) -> np.ndarray:
    pts = [np.array([lo, hi])]
    pts += [f.times - shift for f in functions]
    g = np.unique(np.concatenate(pts))
    g = g[(g >= lo) & (g <= hi)]
    return g[_merge_times(g, EPS_TIME)] if len(g) > 2 else g


def audit_feasibility(flow: FlowOverTime, instance: Instance | None = None,
                      tol: float = 1e-7) -> FeasibilityReport:
    """Check flow conservation, non-deficit, capacity and merge rules.

    Rate conditions are evaluated at the midpoints of the merged breakpoint
    grid, volume conditions at the breakpoints themselves. Violations are
    returned as data.
    """
    inst = instance or flow.instance
    H = inst.horizon
    rep = FeasibilityReport(tol)
    pids = inst.player_ids

    # flow conservation, per player and node
    for p in inst.players:
        for v in inst.nodes:
            if v == p.destination:
                continue
            outs = [flow.inflow[inst.edges[i].id, p.id] for i in inst.out_edges(v)]
            ins = [flow.outflow[inst.edges[i].id, p.id] for i in inst.in_edges(v)]
            supply = p.rate if v == p.origin else 0.0
            if not outs and not ins and supply == 0.0:
                continue
            g = _grid(outs + ins, 0.0, H)
            mids = 0.5 * (g[:-1] + g[1:])
            bal = -supply * np.ones_like(mids)
            cum = -supply * g
            for f in outs:
                bal += f.eval(mids)
                cum += f.integrate().eval(g)
            for f in ins:
                bal -= f.eval(mids)
                cum -= f.integrate().eval(g)
            if len(mids):
                k = int(np.argmax(np.abs(bal)))
                rep.record(Finding("conservation", v, p.id, float(mids[k]), float(abs(bal[k])),
                                   (float(g[k]), float(g[k + 1]))))
            k = int(np.argmax(np.abs(cum)))
            rep.record(Finding("conservation_cumulative", v, p.id, float(g[k]), float(abs(cum[k]))))

    for e in inst.edges:
        tau, nu = e.transit, e.capacity
        top = max(H - tau, 0.0)
        fins = [flow.inflow[e.id, p] for p in pids]
        fouts = [flow.outflow[e.id, p] for p in pids]
        Fin = [f.integrate() for f in fins]
        Fout = [f.integrate() for f in fouts]

        g = _grid(fins, 0.0, top)
        g = np.union1d(g, _grid(fouts, 0.0, top, shift=tau))
        if len(g) > 2:
            g = g[_merge_times(g, EPS_TIME)]

        # non-deficit
        for j, p in enumerate(pids):
            slack = Fin[j].eval(g) - Fout[j].eval(np.minimum(g + tau, H))
            k = int(np.argmin(slack))
            rep.record(Finding("non_deficit", e.id, p, float(g[k]), float(max(0.0, -slack[k]))))

        # capacity rule, evaluated in entrance time
        if len(g) >= 2:
            mids = 0.5 * (g[:-1] + g[1:])
            zin = sum(F.eval(mids) for F in Fin)
            zout = sum(F.eval(np.minimum(mids + tau, H)) for F in Fout)
            z = zin - zout
            rin = sum(f.eval(mids) for f in fins)
            rout = sum(f.eval(np.minimum(mids + tau, H)) for f in fouts)
            scale = nu + float(np.max(rin, initial=0.0))
            ztol = 10 * EPS_TIME * scale
            expected = np.where(z > ztol, nu, np.minimum(rin, nu))
            dev = np.abs(rout - expected)
            inside = mids + tau < H
            dev = np.where(inside, dev, 0.0)
            if len(dev):
                k = int(np.argmax(dev))
                rep.record(Finding("capacity", e.id, "*", float(mids[k]), float(dev[k]),
                                   (float(g[k]), float(g[k + 1]))))

        # merge rule, evaluated in exit time (vacuous when nothing can exit before the horizon)
        if tau >= H:
            continue
        zq = derived_queue(flow, e.id)
        T = BreakpointFunction(zq.times, zq.times + zq.values / nu + tau, eps=0.0)
        og = _grid(fouts, tau, H)
        if len(og) < 2:
            continue
        omids = 0.5 * (og[:-1] + og[1:])
        tot_out = sum(f.eval(omids) for f in fouts)
        worst = Finding("merge", e.id, "*", 0.0, 0.0)
        for k, th in enumerate(omids):
            if th < T.values[0]:
                phi = None
            elif th > T.values[-1]:
                continue
            else:
                phi = T.max_preimage(float(th))
            rates = np.array([f.eval(min(phi, H)) for f in fins]) if phi is not None else np.zeros(len(pids))
            X = rates.sum()
            if X <= 0 and tot_out[k] > 0 and phi is not None:
                continue  # null set; shares are carried over from the previous interval
            want = rates / X * tot_out[k] if X > 0 else np.zeros(len(pids))
            for j, p in enumerate(pids):
                m = abs(fouts[j].eval(float(th)) - want[j])
                if m > worst.magnitude:
                    worst = Finding("merge", e.id, p, float(th), float(m), (float(og[k]), float(og[k + 1])))
        rep.record(worst)
    return rep
