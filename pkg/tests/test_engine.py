import numpy as np
import pytest

from asflow.analysis import payoffs
from asflow.dynamics import audit_feasibility
from asflow.engine import (FIXED_STEP, SimConfig, cumulative_deviation, replay_uniqueness_check, simulate,
                           simulate_fixed_step)
from asflow.errors import EventBudgetExceeded, ModelMismatch, NonLipschitzDetected
from asflow.instance import Edge, Instance, Player, fig2_instance, load_instance, parallel_instance
from asflow.scenarios import data_dir, load_strategy_file
from asflow.strategy import (TIME_ONLY, CallableStrategy, EquilibriumStrategy, Row, TableStrategy,
                             constant_strategy, make_time_only_strategy, mirror_strategy,
                             random_time_only_strategy, two_edge_schedule)

from oracles import simulate_parallel_discrete


def single_edge():
    inst = parallel_instance([1], [1], [2], 3)
    return inst, {"p1": constant_strategy(inst, "p1", {"e1": 1})}


def test_single_edge_example():
    inst, prof = single_edge()
    flow = simulate(inst, prof)
    z = flow.queue_of("e1")
    for th in (0.0, 0.5, 1.0, 1.9):
        assert z.eval(th) == pytest.approx(th, abs=1e-12)
    out = flow.outflow["e1", "p1"]
    assert out.eval(0.5) == 0 and out.eval(1.0) == 1 and out.eval(2.99) == 1
    assert payoffs(flow)["p1"] == pytest.approx(2.0, abs=1e-12)
    ora, _ = simulate_parallel_discrete([1], [1], [2], 3, [lambda th: [1.0]], 1e-3)
    assert ora[0] == pytest.approx(2.0, abs=1e-3)


def test_fig2_mirror_profile_payoffs():
    inst = fig2_instance()
    opp = load_strategy_file(data_dir() / "p2.strategy", inst, "p2")
    flow = simulate(inst, {"p1": mirror_strategy(opp), "p2": opp})
    rho = payoffs(flow)
    assert rho["p1"] == pytest.approx(40, abs=1e-9) and rho["p2"] == pytest.approx(40, abs=1e-9)
    assert audit_feasibility(flow).max_violation <= 1e-9


def _schedule_fn(sched):
    def fn(th):
        for a, b, x in sched:
            if a <= th < b:
                return [x, 1 - x]
        return [sched[-1][2], 1 - sched[-1][2]]
    return fn


def test_time_only_profiles_against_packet_oracle():
    inst = fig2_instance()
    rng = np.random.default_rng(21)
    for _ in range(3):
        g1 = random_time_only_strategy(rng, inst, "p1")
        g2 = random_time_only_strategy(rng, inst, "p2")
        rho = payoffs(simulate(inst, {"p1": g1, "p2": g2}))
        ora, _ = simulate_parallel_discrete([2, 2], [1, 1], [4, 4], 21,
                                            [_schedule_fn(two_edge_schedule(g)) for g in (g1, g2)], 0.01)
        assert rho["p1"] == pytest.approx(ora[0], abs=0.2)
        assert rho["p2"] == pytest.approx(ora[1], abs=0.2)


def test_equilibrium_fig2():
    inst = fig2_instance()
    prof = {p: EquilibriumStrategy(inst, p) for p in inst.player_ids}
    rho = payoffs(simulate(inst, prof))
    assert rho["p1"] == pytest.approx(40, abs=1e-9) and rho["p2"] == pytest.approx(40, abs=1e-9)


def test_zero_supply_player_contributes_nothing():
    inst = parallel_instance([1, 1], [1, 2], [2, 0], 5, validate=False)
    prof = {p: constant_strategy(inst, p, {"e1": 0.5, "e2": 0.5}) for p in inst.player_ids}
    for flow in (simulate(inst, prof), simulate_fixed_step(inst, prof, step=0.3)):
        for e in inst.edge_ids:
            assert np.all(flow.inflow[e, "p2"].values == 0)
            assert np.all(flow.outflow[e, "p2"].values == 0)


def test_step_larger_than_horizon():
    inst = parallel_instance([1], [5], [1], 3)
    prof = {"p1": constant_strategy(inst, "p1", {"e1": 1})}
    flow = simulate_fixed_step(inst, prof, step=10.0)
    assert flow.events == 1
    assert audit_feasibility(flow).ok


def test_determinism_bit_identical(tmp_path):
    inst = fig2_instance()
    rng = np.random.default_rng(8)
    prof = {p: random_time_only_strategy(rng, inst, p) for p in inst.player_ids}
    a = simulate(inst, prof).to_csv_bundle(tmp_path / "a")
    b = simulate(inst, prof).to_csv_bundle(tmp_path / "b")
    assert [x.name for x in a] == [y.name for y in b]
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))


def test_causality():
    inst = fig2_instance()
    base = [(0, 4, {"e1": 0.2, "e2": 0.8}), (4, 7, {"e1": 1.0})]
    g_a = make_time_only_strategy(inst, "p1", {"s": base + [(7, 21, {"e2": 1.0})]})
    g_b = make_time_only_strategy(inst, "p1", {"s": base + [(7, 12, {"e1": 0.5, "e2": 0.5}), (12, 21, {"e1": 1.0})]})
    opp = constant_strategy(inst, "p2", {"e1": 0.5, "e2": 0.5})
    fa = simulate(inst, {"p1": g_a, "p2": opp})
    fb = simulate(inst, {"p1": g_b, "p2": opp})
    grid = np.linspace(0, 7, 141)
    for key in fa.inflow:
        assert np.array_equal(fa.inflow[key].integrate().eval(grid), fb.inflow[key].integrate().eval(grid))
    for e in inst.edge_ids:
        assert np.array_equal(fa.queue_of(e).eval(grid), fb.queue_of(e).eval(grid))
    assert cumulative_deviation(fa, fb) > 0


def test_event_budget():
    inst = fig2_instance()
    rng = np.random.default_rng(1)
    prof = {p: random_time_only_strategy(rng, inst, p) for p in inst.player_ids}
    with pytest.raises(EventBudgetExceeded):
        simulate(inst, prof, max_events=3)
    with pytest.raises(EventBudgetExceeded):
        simulate_fixed_step(inst, prof, SimConfig(mode=FIXED_STEP, step=1e-3, max_events=100))


def test_non_lipschitz_hook_detected():
    inst = fig2_instance()
    # the jump sits just right of the grid point 5.0, inside the probe window
    jumpy = CallableStrategy(inst, "p1", lambda v, info: [1.0, 0.0] if info.theta < 5 + 5e-10 else [0.0, 1.0],
                             TIME_ONLY)
    smooth = CallableStrategy(inst, "p2", lambda v, info: [0.5, 0.5], TIME_ONLY)
    with pytest.raises(NonLipschitzDetected):
        simulate_fixed_step(inst, {"p1": jumpy, "p2": smooth}, step=0.5)
    # a jump that falls between grid points goes unnoticed (best-effort detection)
    late = CallableStrategy(inst, "p1", lambda v, info: [1.0, 0.0] if info.theta < 5.2 else [0.0, 1.0], TIME_ONLY)
    simulate_fixed_step(inst, {"p1": late, "p2": smooth}, step=0.5)


def test_callable_needs_fixed_step():
    inst = fig2_instance()
    hook = {p: CallableStrategy(inst, p, lambda v, info: [0.5, 0.5], TIME_ONLY) for p in inst.player_ids}
    with pytest.raises(ValueError):
        simulate(inst, hook)
    flow = simulate_fixed_step(inst, hook, step=0.1)
    assert payoffs(flow)["p1"] == pytest.approx(40, abs=1e-9)


def test_time_only_information_rejects_exit_time_strategy():
    inst = fig2_instance()
    prof = {p: EquilibriumStrategy(inst, p) for p in inst.player_ids}
    with pytest.raises(ModelMismatch):
        simulate(inst, prof, information=TIME_ONLY)


def test_missing_player_rejected():
    inst = fig2_instance()
    with pytest.raises(ValueError):
        simulate(inst, {"p1": EquilibriumStrategy(inst, "p1")})


def test_fixed_step_first_order_on_misaligned_breakpoints():
    inst = fig2_instance()
    g = make_time_only_strategy(inst, "p1", {"s": [(0, 2.3456, {"e1": 1.0}), (2.3456, 21, {"e2": 1.0})]})
    prof = {"p1": g, "p2": constant_strategy(inst, "p2", {"e1": 0.5, "e2": 0.5})}
    ref = simulate(inst, prof)
    errs = [cumulative_deviation(ref, simulate_fixed_step(inst, prof, step=h)) for h in (0.1, 0.01, 0.001)]
    assert errs[0] > errs[1] > errs[2] > 0
    for h, e in zip((0.1, 0.01, 0.001), errs):
        assert e <= 10 * 8 * h


def test_replay_single_edge_exact():
    inst, prof = single_edge()
    rep = replay_uniqueness_check(inst, prof)
    assert rep.passed and rep.event_deviation == 0
    assert all(e == 0 for e in rep.fixed_errors.values())


def test_replay_fig5_general_network():
    inst = load_instance(data_dir() / "fig5.instance")
    prof = {p: load_strategy_file(data_dir() / f"fig5_{p}.strategy", inst, p) for p in inst.player_ids}
    flow = simulate(inst, prof)
    assert audit_feasibility(flow).max_violation <= 1e-7
    rep = replay_uniqueness_check(inst, prof, steps=(0.1, 0.01))
    assert rep.passed and rep.first_order


def test_adversarial_table_with_many_breakpoints():
    inst = fig2_instance()
    rng = np.random.default_rng(99)
    n = 10_000
    cuts = np.sort(rng.uniform(0, 21, n - 1))
    t = np.concatenate(([0.0], cuts, [21.0]))
    x = rng.random(n)
    rows = [Row(float(a), float(b), {"e1": float(v), "e2": float(1 - v)}) for a, b, v in zip(t[:-1], t[1:], x)
            if b > a]
    g = TableStrategy(inst, "p1", {"s": rows})
    prof = {"p1": g, "p2": mirror_strategy(g, "p2")}
    rep = replay_uniqueness_check(inst, prof, steps=(0.1, 0.01))
    assert rep.passed
    assert rep.events <= 10**6
    flow = simulate(inst, prof)
    assert audit_feasibility(flow).max_violation <= 1e-7
    rho = payoffs(flow)
    assert rho["p1"] == pytest.approx(40, abs=1e-6) and rho["p2"] == pytest.approx(40, abs=1e-6)


def test_destination_convention_general_network():
    # a player whose destination has an out-edge must not route out of it
    inst = Instance(("s", "t", "u"), (Edge("a", "s", "t", 1, 1), Edge("b", "t", "u", 1, 1)),
                    (Player("p", "s", "t", 1.0),), 4)
    g = TableStrategy(inst, "p", {"s": [Row(0, 4, {"a": 1.0})]})
    flow = simulate(inst, {"p": g})
    assert np.all(flow.inflow["b", "p"].values == 0)
    assert payoffs(flow)["p"] == pytest.approx(3.0)
