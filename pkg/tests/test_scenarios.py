import json

import pytest

from asflow.analysis import analyze
from asflow.dynamics import audit_feasibility
from asflow.engine import simulate
from asflow.errors import ParseError
from asflow.instance import fig2_instance
from asflow.scenarios import compare_expected, data_dir, load_scenarios, resolve_path, resolve_profile, scenario

SCENARIOS = load_scenarios()


def test_manifest_lists_every_bundle():
    names = {s.name for s in SCENARIOS}
    assert {"fig2_mirror", "fig2_equilibrium", "fig2_response", "single_edge", "fig5"} <= names
    for suite in ("saturated", "free", "staged"):
        assert any(n.startswith(f"{suite}/") for n in names)


@pytest.mark.parametrize("sc", SCENARIOS, ids=[s.name for s in SCENARIOS])
def test_scenario_matches_expected(sc):
    prof = sc.profile()
    flow = simulate(sc.instance, prof)
    rep = analyze(flow, prof)
    assert compare_expected(sc.expected, rep.payoffs, rep.r, rep.opt, rep.verdict) == []
    assert audit_feasibility(flow).max_violation <= 1e-7


def test_compare_expected_reports_differences():
    diffs = compare_expected({"opt": 80, "payoffs": {"p1": 40}, "payoff_above": {"p2": 40}, "verdict": "verified"},
                             {"p1": 39.0, "p2": 40.0}, {}, 80.0, "refuted")
    assert len(diffs) == 3


def test_resolve_path_prefers_bundled_data():
    assert resolve_path("fig2.instance") == data_dir() / "fig2.instance"
    with pytest.raises(FileNotFoundError):
        resolve_path("no_such.instance")


def test_strategy_specs():
    inst = fig2_instance()
    inline = json.dumps({"table": {"s": [{"from": 0, "to": 21, "proportions": {"e1": 1.0}}]}})
    prof = resolve_profile(inst, {"p1": "mirror:p2", "p2": inline})
    assert prof["p1"].player == "p1"
    with pytest.raises(ParseError):
        resolve_profile(inst, {"p1": "mirror:p1", "p2": "equilibrium"})
    with pytest.raises(KeyError):
        scenario("missing")
