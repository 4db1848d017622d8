"""Bundled scenarios and the textual strategy specs shared with the command line.

A strategy spec is one of

* ``equilibrium``: the capacity-proportional builtin;
* ``mirror:<player>`` or ``mirror_shift:<player>``: built from another player's strategy;
* ``@<path>``: a strategy JSON file, looked up relative to ``base`` and then in the bundled data;
* an inline JSON object.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import ParseError
from .instance import Instance, load_instance
from .strategy import EquilibriumStrategy, Strategy, mirror_shift_response, mirror_strategy, strategy_from_dict


def data_dir() -> Path:
    return Path(str(resources.files("asflow") / "data"))


def resolve_path(name: str | Path, base: str | Path | None = None) -> Path:
    """A user path if it exists, otherwise the bundled file of that name."""
    p = Path(name)
    for cand in ([Path(base) / p] if base is not None else []) + [p, data_dir() / p]:
        if cand.exists():
            return cand
    raise FileNotFoundError(f"no such file: {name}")


def load_strategy_file(path: str | Path, instance: Instance, player: str) -> Strategy:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc.msg}", line=exc.lineno) from exc
    return strategy_from_dict(data, instance, player)


def resolve_profile(instance: Instance, specs: Mapping[str, str], base: str | Path | None = None) -> dict[str, Strategy]:
    """Turn ``{player: spec}`` into strategies, resolving references between players."""
    unknown = set(specs) - set(instance.player_ids)
    if unknown:
        raise ParseError(f"strategies given for unknown players {sorted(unknown)}")
    out: dict[str, Strategy] = {}
    busy: set[str] = set()

    def get(player: str) -> Strategy:
        if player in out:
            return out[player]
        if player not in specs:
            raise ParseError(f"no strategy given for player {player}")
        if player in busy:
            raise ParseError(f"circular strategy reference at player {player}")
        busy.add(player)
        spec = specs[player].strip()
        if spec == "equilibrium":
            g = EquilibriumStrategy(instance, player)
        elif spec.startswith(("mirror:", "mirror_shift:")):
            kind, other = spec.split(":", 1)
            opp = get(other)
            g = mirror_strategy(opp, player) if kind == "mirror" else mirror_shift_response(opp, instance).strategy
        elif spec.startswith("@"):
            g = load_strategy_file(resolve_path(spec[1:], base), instance, player)
        elif spec.startswith("{"):
            g = strategy_from_dict(json.loads(spec), instance, player)
        else:
            raise ParseError(f"cannot read strategy spec {spec!r}")
        busy.discard(player)
        out[player] = g
        return g

    return {p: get(p) for p in instance.player_ids}


@dataclass
class Scenario:
    name: str
    instance: Instance
    specs: dict[str, str]
    expected: dict

    def profile(self) -> dict[str, Strategy]:
        return resolve_profile(self.instance, self.specs, data_dir())


def load_scenarios() -> list[Scenario]:
    root = data_dir()
    manifest = json.loads((root / "scenarios.json").read_text(encoding="utf-8"))
    out = []
    for entry in manifest["scenarios"]:
        expected = json.loads((root / entry["expected"]).read_text(encoding="utf-8"))
        if "expected_key" in entry:
            expected = expected[entry["expected_key"]]
        out.append(Scenario(entry["name"], load_instance(root / entry["instance"]), dict(entry["strategies"]), expected))
    return out


def scenario(name: str) -> Scenario:
    for s in load_scenarios():
        if s.name == name:
            return s
    raise KeyError(name)


def compare_expected(expected: Mapping, payoffs: Mapping[str, float], r: Mapping[str, float],
                     opt: float | None, verdict: str, tol: float = 1e-6) -> list[str]:
    """Differences between a run and its expected-results record (empty when they agree)."""
    diffs = []

    def close(a, b):
        return math.isclose(a, b, rel_tol=tol, abs_tol=tol)

    if "opt" in expected and (opt is None or not close(opt, expected["opt"])):
        diffs.append(f"opt: expected {expected['opt']}, got {opt}")
    if "total" in expected and not close(sum(payoffs.values()), expected["total"]):
        diffs.append(f"total: expected {expected['total']}, got {sum(payoffs.values())}")
    for p, v in expected.get("payoffs", {}).items():
        if not close(payoffs[p], v):
            diffs.append(f"payoff {p}: expected {v}, got {payoffs[p]}")
    for p, v in expected.get("payoff_above", {}).items():
        if not payoffs[p] > v:
            diffs.append(f"payoff {p}: expected more than {v}, got {payoffs[p]}")
    for e, v in expected.get("r", {}).items():
        if not close(r[e], v):
            diffs.append(f"r {e}: expected {v}, got {r[e]}")
    if "verdict" in expected and verdict != expected["verdict"]:
        diffs.append(f"verdict: expected {expected['verdict']}, got {verdict}")
    return diffs
