import json
from fractions import Fraction as Fr
from pathlib import Path
from asflow import *
from asflow.instance import Instance, Edge, Player, dumps_instance
from asflow.analysis import _opt
D = Path("src/asflow/data")
def dump(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")
def save(inst, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_instance(inst))
save(fig2_instance(), D / "fig2.instance")
rows=[(0,5/3,.5),(5/3,10/3,.75),(10/3,5,.875),(5,25/3,.25),(25/3,21,.5)]
p2 = {"version": 1, "table": {"s": [{"from": a, "to": b, "proportions": {"e1": x, "e2": 1 - x}} for a, b, x in rows]}}
dump(D / "p2.strategy", p2)
dump(D / "response.strategy", {"builtin": "mirror_shift", "opponent": p2})
save(parallel_instance([1], [1], [2], 3), D / "single_edge.instance")
dump(D / "single_edge.strategy", {"version": 1, "table": {"s": [{"from": 0, "to": 3, "proportions": {"e1": 1}}]}})
E=[Edge("a1","s1","v1",10,2),Edge("a2","s1","v2",10,2),Edge("b1","s2","v1",1,2),Edge("b2","s2","v2",1,2),
   Edge("e1","v1","t",1,1),Edge("e2","v2","t",1,1)]
save(Instance(("s1","s2","v1","v2","t"),tuple(E),(Player("p1","s1","t",2),Player("p2","s2","t",2)),30), D / "fig5.instance")
dump(D / "fig5_p1.strategy", {"version": 1, "table": {"s1": [{"from": 0, "to": 30, "proportions": {"a1": 0.5, "a2": 0.5}}]}})
dump(D / "fig5_p2.strategy", {"version": 1, "table": {"s2": [
    {"from": 0, "to": 10/3, "proportions": {"b1": 1, "b2": 0}},
    {"from": 10/3, "to": 20/3, "proportions": {"b1": 0, "b2": 1}},
    {"from": 20/3, "to": 40/3, "proportions": {"b1": 0.75, "b2": 0.25}},
    {"from": 40/3, "to": 30, "proportions": {"b1": 0.5, "b2": 0.5}}]}})

scen = []
suite_expect = {}
def add(name, inst, strategies, expected):
    entry = {"name": name, "instance": inst, "strategies": strategies}
    if "/" in name:
        suite, key = name.split("/")
        suite_expect.setdefault(suite, {})[key] = expected
        entry["expected"] = f"suites/{suite}/expected.json"
        entry["expected_key"] = key
    else:
        entry["expected"] = f"{name}.expected.json"
        dump(D / entry["expected"], expected)
    scen.append(entry)
add("fig2_mirror", "fig2.instance", {"p1": "mirror:p2", "p2": "@p2.strategy"},
    {"opt": 80, "payoffs": {"p1": 40, "p2": 40}, "r": {"e1": 10, "e2": 10}, "verdict": "inapplicable"})
add("fig2_equilibrium", "fig2.instance", {"p1": "equilibrium", "p2": "equilibrium"},
    {"opt": 80, "payoffs": {"p1": 40, "p2": 40}, "r": {"e1": 10, "e2": 10}, "verdict": "verified"})
add("fig2_response", "fig2.instance", {"p1": "@response.strategy", "p2": "@p2.strategy"},
    {"opt": 80, "total": 80, "payoff_above": {"p1": 40}, "verdict": "refuted"})
add("single_edge", "single_edge.instance", {"p1": "@single_edge.strategy"},
    {"opt": 2, "payoffs": {"p1": 2}, "r": {"e1": 1}, "verdict": "verified"})
add("fig5", "fig5.instance", {"p1": "@fig5_p1.strategy", "p2": "@fig5_p2.strategy"},
    {"payoffs": {"p1": 52/3, "p2": 106/3}, "r": {"e1": 107/6, "e2": 39/2}, "verdict": "inapplicable"})

SUITES = {
 "saturated": {"sat1": ((1,2),(1,3),(2,2,2),11), "sat2": ((2,2),(1,1),(3,1),Fr(32,3)), "sat3": ((1,1,1),(0,1,2),(2,3),7)},
 "free": {"free1": ((2,2),(0,0),(1,2),5), "free2": ((1,3),(0,0),(1,1,1),4), "free3": ((3,),(0,),(2,),Fr(10,3))},
 "staged": {"staged1": ((1,1),(0,3),(Fr(3,2),),Fr(28,3)), "staged2": ((2,2),(0,10),(1,),20), "staged3": ((1,2,2),(0,1,4),(1,2),9)},
}
for sname, insts in SUITES.items():
    for name, (nu, tau, d, H) in insts.items():
        inst = parallel_instance(nu, tau, [float(x) for x in d], float(H))
        path = f"suites/{sname}/{name}.instance"
        save(inst, D / path)
        # closed form in exact rationals: optimum recursion and proportional shares
        opt = _opt([(Fr(a), Fr(b)) for a, b in zip(nu, tau)], sum(Fr(x) for x in d), Fr(H))
        tot = sum(Fr(x) for x in d)
        add(f"{sname}/{name}", path, {p.id: "equilibrium" for p in inst.players},
            {"opt": float(opt), "payoffs": {p.id: float(opt * Fr(x) / tot) for p, x in zip(inst.players, d)},
             "verdict": "verified"})
for suite, ex in suite_expect.items():
    dump(D / f"suites/{suite}/expected.json", ex)
dump(D / "scenarios.json", {"version": 1, "scenarios": scen})
