import numpy as np
import pytest

from asflow.dynamics import (FlowOverTime, audit_feasibility, exit_time, split_outflow, total_outflow,
                             waiting_time)
from asflow.engine import simulate
from asflow.instance import Edge, fig2_instance, parallel_instance
from asflow.strategy import constant_strategy
from asflow.timeseries import StepFunction

from oracles import fifo_packets, fluid_queue, packet_cumulative


def random_inflow(rng, horizon=5.0, max_pieces=5):
    k = int(rng.integers(1, max_pieces + 1))
    cuts = np.sort(rng.uniform(0, horizon, k - 1))
    t = np.concatenate(([0.0], cuts, [horizon]))
    return StepFunction(t, rng.uniform(0, 3, k))


def oracle_error(f: StepFunction, edge: Edge, h: float) -> float:
    out, _ = total_outflow(f, edge)
    F = out.integrate()
    t, A, z, t_exit, out_cum = fluid_queue(lambda x: float(f.eval(x)), edge.capacity, edge.transit, f.end, h)
    keep = t_exit <= f.end
    return float(np.max(np.abs(F.eval(t_exit[keep]) - out_cum[keep])))


def test_single_edge_overload_against_oracle():
    edge = Edge("e", "s", "t", 1.0, 1.0)
    f = StepFunction([0, 1, 3], [2, 0])
    out, z = total_outflow(f, edge)
    assert z.eval(0.5) == pytest.approx(0.5)
    assert z.eval(1.0) == pytest.approx(1.0)
    assert z.eval(2.0) == pytest.approx(0.0)
    assert out.eval(0.5) == 0 and out.eval(1.0) == 1 and out.eval(2.9) == 1
    assert oracle_error(f, edge, 1e-4) < 1e-3


def test_uncongested_outflow_is_shifted_inflow():
    edge = Edge("e", "s", "t", 1.5, 2.0)
    f = StepFunction([0, 1, 2.5, 4, 6], [1, 2, 0.5, 1])
    out, z = total_outflow(f, edge)
    assert np.all(z.values == 0)
    for th in np.linspace(0, 5.99, 200):
        want = f.eval(th - 1.5) if th >= 1.5 else 0.0
        assert out.eval(th) == pytest.approx(want)


def test_fig2_mirror_queue_slope():
    edge = Edge("e1", "s", "t", 1.0, 2.0)
    out, z = total_outflow(StepFunction.constant(4.0, 0, 21), edge)
    assert z.slopes()[0] == pytest.approx(2.0)
    # exit time 2*theta + 1 reaches the horizon at 10
    assert exit_time(10.0, z.eval(10.0), edge) == pytest.approx(21.0)


def test_exit_and_waiting_time_formulas():
    e = Edge("e", "s", "t", 1.0, 2.0)
    assert exit_time(0, 0, e) == 1 and waiting_time(0, 0, e) == 0
    assert exit_time(10, 4, e) == 13 and waiting_time(10, 4, e) == 2


def _split(rates, nu=2.0, tau=1.0, H=10.0):
    edge = Edge("e", "s", "t", tau, nu)
    fins = [StepFunction.constant(r, 0, H) if np.isscalar(r) else r for r in rates]
    tot = fins[0]
    for f in fins[1:]:
        tot = tot + f
    out, z = total_outflow(tot, edge)
    T = type(z)(z.times, z.times + z.values / nu + tau)
    return split_outflow(fins, out, T), out


def test_split_single_player_is_total():
    (one,), out = _split([3.0])
    assert one == out


def test_split_identical_players_half_each():
    (a, b), out = _split([1.5, 1.5])
    for th in np.linspace(0, 9.9, 100):
        assert a.eval(th) == pytest.approx(0.5 * out.eval(th))
        assert b.eval(th) == pytest.approx(0.5 * out.eval(th))


def test_split_three_to_one_against_packets():
    (a, b), out = _split([3.0, 1.0])
    assert a.eval(5.0) == pytest.approx(1.5) and b.eval(5.0) == pytest.approx(0.5)
    assert a.eval(0.5) == 0
    # packet FIFO oracle for the cumulative shares
    h = 1e-3
    entries = [(k * h, j, r * h) for k in range(10000) for j, r in ((0, 3.0), (1, 1.0))]
    packets = fifo_packets(entries, 2.0, 1.0)
    for th in (2.0, 5.0, 9.5):
        assert a.integrate().eval(th) == pytest.approx(packet_cumulative(packets, 0, th), abs=1e-2)
        assert b.integrate().eval(th) == pytest.approx(packet_cumulative(packets, 1, th), abs=1e-2)


def test_split_sums_to_total_and_nonnegative():
    rng = np.random.default_rng(11)
    for _ in range(20):
        fins = [random_inflow(rng, 6.0) for _ in range(3)]
        parts, out = _split(fins, nu=1.5, tau=0.7, H=6.0)
        grid = np.linspace(0, 5.999, 400)
        total = sum(p.eval(grid) for p in parts)
        assert np.all(np.abs(total - out.eval(grid)) <= 1e-9)
        assert all(np.all(p.values >= 0) for p in parts)


def test_total_outflow_invariants_random():
    rng = np.random.default_rng(2)
    for _ in range(30):
        edge = Edge("e", "s", "t", float(rng.uniform(0.1, 2)), float(rng.uniform(0.5, 2)))
        f = random_inflow(rng)
        out, z = total_outflow(f, edge)
        assert np.all(out.values <= edge.capacity + 1e-12)
        # at capacity wherever the queue is positive
        for th in np.linspace(0, f.end - edge.transit, 60)[:-1]:
            if z.eval(th) > 1e-9:
                assert out.eval(th + edge.transit) == pytest.approx(edge.capacity)
        T = z.times + z.values / edge.capacity + edge.transit
        assert np.all(np.diff(T) >= -1e-12)
        assert np.all(z.slopes() >= -edge.capacity - 1e-9)
        # non-deficit
        Fin, Fout = f.integrate(), out.integrate()
        g = np.linspace(0, f.end - edge.transit, 50)
        assert np.all(Fin.eval(g) - Fout.eval(g + edge.transit) >= -1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_oracle_convergence_first_order(seed):
    rng = np.random.default_rng(100 + seed)
    edge = Edge("e", "s", "t", 0.5, 1.0)
    f = random_inflow(rng)
    errs = [oracle_error(f, edge, h) for h in (1e-2, 1e-3, 1e-4)]
    C = 2 * (3 + edge.capacity)
    for h, e in zip((1e-2, 1e-3, 1e-4), errs):
        assert e <= C * h
    assert errs[2] <= errs[0]


def test_audit_clean_on_engine_output():
    inst = fig2_instance()
    prof = {p: constant_strategy(inst, p, {"e1": 0.3, "e2": 0.7}) for p in inst.player_ids}
    rep = audit_feasibility(simulate(inst, prof))
    assert rep.max_violation <= 1e-7 and rep.ok


def _one_edge_flow(inflow: StepFunction, outflow: StepFunction) -> FlowOverTime:
    inst = parallel_instance([1.0], [1.0], [2.0], 3.0)
    return FlowOverTime(inst, {("e1", "p1"): inflow}, {("e1", "p1"): outflow})


def test_audit_flags_conservation_fault():
    good_in = StepFunction.constant(2.0, 0, 3)
    out, _ = total_outflow(good_in, Edge("e1", "s", "t", 1.0, 1.0))
    bad_in = StepFunction([0, 1, 2, 3], [2, 1, 2])  # loses rate 1 at the source on [1, 2)
    rep = audit_feasibility(_one_edge_flow(bad_in, out))
    f = rep.worst["conservation"]
    assert f.subject == "s" and f.player == "p1"
    assert f.magnitude == pytest.approx(1.0)
    assert f.interval == (1.0, 2.0)
    assert not rep.ok
    assert "conservation" in rep.to_csv()


def test_audit_flags_capacity_fault():
    good_in = StepFunction.constant(2.0, 0, 3)
    slow_out = StepFunction([0, 1, 3], [0, 0.5])  # queue positive but edge below capacity
    rep = audit_feasibility(_one_edge_flow(good_in, slow_out))
    assert rep.max_by_constraint["capacity"] == pytest.approx(0.5)
