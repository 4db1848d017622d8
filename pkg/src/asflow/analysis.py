"""Payoffs, the system optimum of parallel networks, and equilibrium checks."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import FlowOverTime
from .engine import SimConfig, simulate
from .errors import NotAttained, NotParallel
from .instance import Instance
from .strategy import (EquilibriumStrategy, Strategy, TableStrategy, check_two_player_hypotheses,
                       mirror_shift_response, mirror_strategy, random_time_only_strategy)

REL_TOL = 1e-6
# Opt and the simulated total round the same rational differently, so Opt/total may sit a few ulps below 1
ROUNDING = 1e-12

VERIFIED = "verified"
REFUTED = "refuted"
INAPPLICABLE = "inapplicable"


def payoff(flow: FlowOverTime, player: str, instance: Instance | None = None) -> float:
    """Volume of ``player`` arriving at its destination by the horizon."""
    inst = instance or flow.instance
    t = inst.player(player).destination
    arrived = math.fsum(flow.outflow[inst.edges[i].id, player].integral() for i in inst.in_edges(t))
    left = math.fsum(flow.inflow[inst.edges[i].id, player].integral() for i in inst.out_edges(t))
    return arrived - left


def payoffs(flow: FlowOverTime) -> dict[str, float]:
    return {p: payoff(flow, p) for p in flow.instance.player_ids}


def _opt(edges: list[tuple[float, float]], demand: float, horizon: float) -> float:
    edges = [(nu, tau) for nu, tau in edges if tau < horizon]
    if not edges or demand <= 0:
        return 0.0
    cap = math.fsum(nu for nu, _ in edges)
    if demand >= cap:
        return math.fsum(nu * (horizon - tau) for nu, tau in edges)
    if all(tau == 0 for _, tau in edges):
        return horizon * demand
    k = max(range(len(edges)), key=lambda i: (edges[i][1], -i))
    tau_star = edges[k][1]
    rest = edges[:k] + edges[k + 1:]
    return demand * (horizon - tau_star) + _opt(rest, demand, tau_star)


def system_optimum_parallel(instance: Instance) -> float:
    """Maximum volume the combined supply can push through a parallel network by the horizon."""
    if not instance.is_parallel():
        raise NotParallel("the closed-form optimum needs a parallel-edge instance")
    return _opt([(e.capacity, e.transit) for e in instance.edges], instance.total_supply, instance.horizon)


def compute_r(flow: FlowOverTime, edge_id: str, horizon: float | None = None) -> float:
    """Earliest entry time whose exit time equals the horizon; the horizon itself if never reached."""
    H = flow.horizon if horizon is None else horizon
    T = flow.exit_time_of(edge_id)
    try:
        return T.min_preimage(H, tol=1e-12 * max(1.0, H))
    except NotAttained:
        return H


# -- equilibrium verification --------------------------------------------------------------

def equilibrium_profile(instance: Instance) -> dict[str, Strategy]:
    return {p: EquilibriumStrategy(instance, p) for p in instance.player_ids}


@dataclass
class Verdict:
    status: str
    payoffs: dict[str, float]
    total: float
    opt: float | None
    witness: str = ""
    flow: FlowOverTime | None = field(default=None, repr=False)

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED


def _share_verdict(instance: Instance, rho: dict[str, float], opt: float,
                   profile: dict[str, Strategy] | None, rel_tol: float = REL_TOL) -> tuple[str, str]:
    tol = rel_tol * max(opt, 1.0)
    total = math.fsum(rho.values())
    if abs(total - opt) > tol:
        return REFUTED, f"total payoff {total!r} differs from Opt {opt!r}"
    D = instance.total_supply
    for p in instance.players:
        share = opt * p.rate / D
        if abs(rho[p.id] - share) > tol:
            return REFUTED, f"player {p.id} earns {rho[p.id]!r}, its share is {share!r}"
    # the share bound only rules out deviations against capacity-proportional opponents
    # (with a single edge every strategy routes the same way)
    trivial = len(instance.edges) == 1
    if not trivial and (profile is None or not all(isinstance(g, EquilibriumStrategy) for g in profile.values())):
        return INAPPLICABLE, "shares attained, but the certificate covers the capacity-proportional profile only"
    return VERIFIED, ""


def verify_equilibrium_parallel(instance: Instance, profile: dict[str, Strategy] | None = None,
                                config: SimConfig | None = None, rel_tol: float = REL_TOL) -> Verdict:
    """Certify a profile through the share bound: total = Opt and each share = Opt * d_j / sum d.

    A profile that misses either equality is refuted. One that meets both is
    verified when it is the capacity-proportional profile; for any other
    profile the bound proves nothing and the verdict is ``inapplicable``.
    """
    if not instance.is_parallel():
        raise NotParallel("equilibrium verification needs a parallel-edge instance")
    profile = profile or equilibrium_profile(instance)
    flow = simulate(instance, profile, config)
    rho = payoffs(flow)
    opt = system_optimum_parallel(instance)
    status, witness = _share_verdict(instance, rho, opt, profile, rel_tol)
    return Verdict(status, rho, math.fsum(rho.values()), opt, witness, flow)


def deviation_payoff(instance: Instance, profile: dict[str, Strategy], deviator: str,
                     alternate: Strategy, config: SimConfig | None = None) -> float:
    """Payoff of ``deviator`` after switching to ``alternate`` with everybody else unchanged."""
    changed = dict(profile)
    changed[deviator] = alternate
    return payoff(simulate(instance, changed, config), deviator)


@dataclass
class DeviationProbe:
    deviator: str
    strategy: Strategy = field(repr=False)
    payoff: float
    bound: float

    @property
    def excess(self) -> float:
        return self.payoff - self.bound


def probe_deviations(instance: Instance, rng, n: int = 20, max_breakpoints: int = 6) -> list[DeviationProbe]:
    """Random time-only deviations by random players against the equilibrium profile."""
    base = equilibrium_profile(instance)
    opt = system_optimum_parallel(instance)
    D = instance.total_supply
    out = []
    for _ in range(n):
        p = instance.players[int(rng.integers(len(instance.players)))]
        alt = random_time_only_strategy(rng, instance, p.id, max_breakpoints)
        out.append(DeviationProbe(p.id, alt, deviation_payoff(instance, base, p.id, alt), opt * p.rate / D))
    return out


# -- non-existence demonstration -------------------------------------------------------------

@dataclass
class NoEquilibriumDemo:
    opt: float
    baseline: dict[str, float]
    response_payoff: float
    opponent_payoff: float
    margin: float
    epsilon: float
    delta: float
    r: float
    r_hat_1: float
    r_hat_2: float
    realized_r: dict[str, float]
    responder: str
    first_edge: str
    response: TableStrategy = field(repr=False)

    @property
    def holds(self) -> bool:
        return self.margin > 0 and self.r_hat_2 < self.r < self.r_hat_1


def demonstrate_no_equilibrium(instance: Instance, opponent: TableStrategy,
                               config: SimConfig | None = None) -> NoEquilibriumDemo:
    """Mirror a time-only opponent, then improve the mirror strictly beyond half the optimum."""
    check_two_player_hypotheses(instance)
    mirror = mirror_strategy(opponent)
    responder = mirror.player
    base_flow = simulate(instance, {opponent.player: opponent, responder: mirror}, config)
    res = mirror_shift_response(opponent, instance)
    flow = simulate(instance, {opponent.player: opponent, responder: res.strategy}, config)
    return NoEquilibriumDemo(
        opt=res.opt, baseline=payoffs(base_flow), response_payoff=res.payoff,
        opponent_payoff=payoff(flow, opponent.player), margin=res.margin,
        epsilon=res.epsilon, delta=res.delta, r=res.r, r_hat_1=res.r_hat_1, r_hat_2=res.r_hat_2,
        realized_r=res.realized_r, responder=responder, first_edge=res.first_edge, response=res.strategy)


# -- price of anarchy --------------------------------------------------------------------------

@dataclass
class PoARow:
    name: str
    opt: float
    total: float
    ratio: float


@dataclass
class PoAReport:
    rows: list[PoARow]
    excluded: list[tuple[str, str]]
    rel_tol: float = REL_TOL

    @property
    def passed(self) -> bool:
        return all(1.0 - ROUNDING <= r.ratio <= 1.0 + self.rel_tol for r in self.rows)

    @property
    def worst(self) -> float:
        return max((abs(r.ratio - 1.0) for r in self.rows), default=0.0)


def price_of_anarchy_report(instances: list[Instance], profiles: list | None = None,
                            names: list[str] | None = None, config: SimConfig | None = None) -> PoAReport:
    """``Opt / total payoff`` for every verified equilibrium; refuted profiles are listed separately."""
    rows, excluded = [], []
    for k, inst in enumerate(instances):
        name = names[k] if names else f"instance-{k}"
        prof = profiles[k] if profiles and profiles[k] is not None else None
        v = verify_equilibrium_parallel(inst, prof, config)
        if not v.verified:
            excluded.append((name, v.witness))
            continue
        ratio = v.opt / v.total if v.total > 0 else (1.0 if v.opt == 0 else math.inf)
        rows.append(PoARow(name, v.opt, v.total, ratio))
    return PoAReport(rows, excluded)


# -- reports ------------------------------------------------------------------------------------

@dataclass
class AnalysisReport:
    payoffs: dict[str, float]
    total: float
    opt: float | None
    r: dict[str, float]
    verdict: str
    witness: str = ""
    poa: float | None = None

    def rows(self) -> list[tuple[str, str, object]]:
        out: list[tuple[str, str, object]] = [("payoff", p, v) for p, v in sorted(self.payoffs.items())]
        out.append(("total_payoff", "*", self.total))
        if self.opt is not None:
            out.append(("opt", "*", self.opt))
        out += [("r", e, v) for e, v in sorted(self.r.items())]
        out.append(("verdict", "*", self.verdict))
        if self.poa is not None:
            out.append(("poa", "*", self.poa))
        return out

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "subject", "value"])
        for m, s, v in self.rows():
            w.writerow([m, s, repr(float(v)) if isinstance(v, (float, int, np.floating)) else v])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def summary(self) -> str:
        lines = [f"payoff {p}: {v:.9g}" for p, v in sorted(self.payoffs.items())]
        lines.append(f"total payoff: {self.total:.9g}")
        if self.opt is not None:
            lines.append(f"optimum: {self.opt:.9g}")
        lines += [f"r {e}: {v:.9g}" for e, v in sorted(self.r.items())]
        lines.append(f"equilibrium: {self.verdict}" + (f" ({self.witness})" if self.witness else ""))
        if self.poa is not None:
            lines.append(f"price of anarchy: {self.poa:.9g}")
        return "\n".join(lines) + "\n"


def analyze(flow: FlowOverTime, profile: dict[str, Strategy] | None = None) -> AnalysisReport:
    """Payoffs and activity times of a simulated flow plus an equilibrium verdict where one applies.

    ``profile`` is the profile that produced ``flow``; without it no profile can be verified.
    """
    inst = flow.instance
    rho = payoffs(flow)
    total = math.fsum(rho.values())
    r = {e: compute_r(flow, e) for e in inst.edge_ids}
    if not inst.is_parallel():
        return AnalysisReport(rho, total, None, r, INAPPLICABLE, "not a parallel-edge network")
    opt = system_optimum_parallel(inst)
    verdict, witness = _share_verdict(inst, rho, opt, profile)
    poa = (opt / total if total > 0 else None) if verdict == VERIFIED else None
    return AnalysisReport(rho, total, opt, r, verdict, witness, poa)
