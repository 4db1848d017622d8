"""Command-line front end.

Verbs: ``simulate``, ``verify``, ``opt``, ``counterexample``, ``replay-check``, ``export``.
Exit status is 0 on success or PASS, 2 when a verification is refuted or a
check fails, and 1 on usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (INAPPLICABLE, REFUTED, VERIFIED, analyze, demonstrate_no_equilibrium, equilibrium_profile,
                       system_optimum_parallel, verify_equilibrium_parallel)
from .dynamics import audit_feasibility
from .engine import EVENT_DRIVEN, FIXED_STEP, SimConfig, replay_uniqueness_check, simulate
from .errors import AsflowError
from .instance import Instance, _num, dumps_instance, load_instance
from .scenarios import load_scenarios, resolve_path, resolve_profile
from .strategy import random_time_only_strategy

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(x) -> str:
    if isinstance(x, (float, int, np.floating)):
        v = _num(float(x))
        return str(v) if isinstance(v, int) else repr(v)
    return str(x)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance JSON file (bundled names such as fig2.instance also work)")
    common.add_argument("--strategy", action="append", default=[], metavar="PLAYER=SPEC",
                        help="equilibrium, mirror:<player>, mirror_shift:<player>, @file or inline JSON")
    common.add_argument("--mode", choices=("event", "fixed"), default="event")
    common.add_argument("--step", type=float, default=None, metavar="H_FRACTION",
                        help="fixed-step size as a fraction of the horizon")
    common.add_argument("--tol", type=float, default=1e-9, help="event time tolerance")
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--max-events", type=int, default=10**6)
    common.add_argument("--out", default="asflow_out", help="output directory (created if absent)")

    parser = _Parser(prog="asflow", description="Atomic splittable flow over time games.")
    parser.add_argument("--version", action="version", version=f"asflow {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="simulate a strategy profile")
    v = sub.add_parser("verify", parents=[common], help="certify an equilibrium on parallel networks")
    v.add_argument("--equilibrium", action="store_true", help="use the capacity-proportional profile")
    sub.add_parser("opt", parents=[common], help="print the system optimum of a parallel network")
    c = sub.add_parser("counterexample", parents=[common], help="beat a time-only opponent on two parallel edges")
    c.add_argument("--opponent", required=True, help="opponent strategy spec, or 'random' (uses --seed)")
    c.add_argument("--opponent-player", default=None, help="player id of the opponent (default: the second)")
    r = sub.add_parser("replay-check", parents=[common], help="rerun a profile with perturbed solvers")
    r.add_argument("--scenarios", action="store_true", help="check every bundled scenario")
    sub.add_parser("export", parents=[common], help="write the resolved instance and strategies as JSON")
    return parser


def _config(args, instance: Instance) -> SimConfig:
    if args.tol <= 0:
        raise UsageError("--tol must be positive")
    if args.mode == "fixed":
        if args.step is None or args.step <= 0:
            raise UsageError("--mode fixed needs --step > 0")
        return SimConfig(FIXED_STEP, args.step * instance.horizon, args.tol, args.max_events)
    return SimConfig(EVENT_DRIVEN, None, args.tol, args.max_events)


def _instance(args) -> Instance:
    if not args.instance:
        raise UsageError("--instance is required")
    return load_instance(resolve_path(args.instance))


def _base(args) -> Path | None:
    return Path(args.instance).parent if args.instance else None


def _specs(args) -> dict[str, str]:
    out = {}
    for item in args.strategy:
        if "=" not in item:
            raise UsageError(f"--strategy expects PLAYER=SPEC, got {item!r}")
        p, spec = item.split("=", 1)
        out[p.strip()] = spec
    return out


def _profile(args, inst: Instance):
    specs = _specs(args)
    if getattr(args, "equilibrium", False):
        specs = {p: "equilibrium" for p in inst.player_ids}
    return resolve_profile(inst, specs, _base(args))


def _out(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_summary(out: Path, pairs: list[tuple[str, object]]) -> str:
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in pairs)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    return text


def _write_rows(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def cmd_simulate(args) -> int:
    inst = _instance(args)
    prof = _profile(args, inst)
    flow = simulate(inst, prof, _config(args, inst))
    out = _out(args)
    flow.to_csv_bundle(out)
    rep = analyze(flow, prof)
    rep.to_csv(out / "analysis.csv")
    audit = audit_feasibility(flow)
    audit.to_csv(out / "audit.csv")
    pairs = [("VERB", "simulate"), ("MODE", flow.meta["mode"]), ("EVENTS", flow.events)]
    pairs += [(f"PAYOFF_{p}", v) for p, v in sorted(rep.payoffs.items())]
    pairs.append(("TOTAL_PAYOFF", rep.total))
    if rep.opt is not None:
        pairs.append(("OPT", rep.opt))
    pairs += [(f"R_{e}", v) for e, v in sorted(rep.r.items())]
    pairs += [("AUDIT_MAX_VIOLATION", audit.max_violation), ("EQUILIBRIUM", rep.verdict)]
    print(_write_summary(out, pairs), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    target = Path(args.instance) if args.instance else None
    if target is not None and target.is_dir():
        paths = sorted(target.glob("*.instance"))
        if not paths:
            raise UsageError(f"no *.instance files in {target}")
    else:
        paths = [resolve_path(_instance_arg(args))]
    out = _out(args)
    rows, pairs, codes = [], [("VERB", "verify")], set()
    for path in paths:
        inst = load_instance(path)
        name = path.stem
        if not inst.is_parallel():
            status, v = INAPPLICABLE, None
        else:
            v = verify_equilibrium_parallel(inst, resolve_profile(inst, _verify_specs(args, inst), path.parent),
                                            _config(args, inst))
            status = v.status
        key = name.upper()
        pairs.append((f"VERDICT_{key}", status.upper()))
        if v is not None:
            rows += [(name, "payoff", p, x) for p, x in sorted(v.payoffs.items())]
            rows += [(name, "total_payoff", "*", v.total), (name, "opt", "*", v.opt)]
            pairs += [(f"PAYOFF_{key}_{p}", x) for p, x in sorted(v.payoffs.items())]
            pairs += [(f"OPT_{key}", v.opt)]
            if v.witness:
                pairs.append((f"WITNESS_{key}", v.witness))
        rows.append((name, "verdict", "*", status))
        codes.add({VERIFIED: EXIT_OK, REFUTED: EXIT_FAIL}.get(status, EXIT_ERROR))
    _write_rows(out / "verify.csv", ["instance", "metric", "subject", "value"], rows)
    print(_write_summary(out, pairs), end="")
    # a refutation outranks an inapplicable instance in a batch
    return EXIT_FAIL if EXIT_FAIL in codes else max(codes)


def _instance_arg(args) -> str:
    if not args.instance:
        raise UsageError("--instance is required")
    return args.instance


def _verify_specs(args, inst: Instance) -> dict[str, str]:
    specs = _specs(args)
    if args.equilibrium or not specs:
        return {p: "equilibrium" for p in inst.player_ids}
    return specs


def cmd_opt(args) -> int:
    inst = _instance(args)
    value = system_optimum_parallel(inst)
    out = _out(args)
    _write_rows(out / "opt.csv", ["metric", "subject", "value"], [("opt", "*", value)])
    _write_summary(out, [("VERB", "opt"), ("OPT", value)])
    print(_fmt(value))
    return EXIT_OK


def cmd_counterexample(args) -> int:
    inst = _instance(args)
    opp_player = args.opponent_player or inst.player_ids[-1]
    if opp_player not in inst.player_ids:
        raise UsageError(f"unknown player {opp_player!r}")
    if args.opponent == "random":
        opponent = random_time_only_strategy(np.random.default_rng(args.seed), inst, opp_player)
    else:
        opponent = resolve_profile(inst, {opp_player: args.opponent, **{p: "equilibrium" for p in inst.player_ids
                                                                          if p != opp_player}}, _base(args))[opp_player]
    demo = demonstrate_no_equilibrium(inst, opponent, _config(args, inst))
    out = _out(args)
    values = [("opt", demo.opt), ("baseline_payoff", demo.baseline[demo.responder]),
              ("response_payoff", demo.response_payoff), ("opponent_payoff", demo.opponent_payoff),
              ("margin", demo.margin), ("epsilon", demo.epsilon), ("delta", demo.delta), ("r", demo.r),
              ("r_hat_1", demo.r_hat_1), ("r_hat_2", demo.r_hat_2)]
    _write_rows(out / "counterexample.csv", ["metric", "subject", "value"],
                [(m, demo.responder, v) for m, v in values])
    (out / f"response_{demo.responder}.strategy").write_text(
        json.dumps(demo.response.to_dict(), indent=2) + "\n", encoding="utf-8")
    status = "PASS" if demo.holds else "FAIL"
    pairs = [("VERB", "counterexample"), ("RESPONDER", demo.responder), ("FIRST_EDGE", demo.first_edge)]
    pairs += [(m.upper(), v) for m, v in values] + [("RESULT", status)]
    print(_write_summary(out, pairs), end="")
    return EXIT_OK if demo.holds else EXIT_FAIL


def cmd_replay(args) -> int:
    if args.scenarios:
        jobs = [(s.name, s.instance, s.profile()) for s in load_scenarios()]
    else:
        inst = _instance(args)
        jobs = [(Path(args.instance).stem, inst, _profile(args, inst))]
    out = _out(args)
    rows, pairs, ok = [], [("VERB", "replay-check")], True
    for name, inst, prof in jobs:
        cfg = SimConfig(EVENT_DRIVEN, None, args.tol, args.max_events)
        rep = replay_uniqueness_check(inst, prof, config=cfg)
        key = name.upper().replace("/", "_")
        rows.append((name, "event_deviation", "*", rep.event_deviation))
        rows += [(name, "fixed_error", h, e) for h, e in rep.fixed_errors.items()]
        pairs += [(f"EVENT_DEVIATION_{key}", rep.event_deviation),
                  (f"FIRST_ORDER_{key}", str(rep.first_order).upper()),
                  (f"RESULT_{key}", "PASS" if rep.passed else "FAIL")]
        ok &= rep.passed
    _write_rows(out / "replay.csv", ["scenario", "metric", "step", "value"], rows)
    pairs.append(("RESULT", "PASS" if ok else "FAIL"))
    print(_write_summary(out, pairs), end="")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_export(args) -> int:
    inst = _instance(args)
    prof = _profile(args, inst)
    out = _out(args)
    (out / "instance.json").write_text(dumps_instance(inst), encoding="utf-8")
    pairs = [("VERB", "export"), ("INSTANCE", "instance.json")]
    for p, g in prof.items():
        name = f"{p}.strategy"
        (out / name).write_text(json.dumps(g.to_dict(), indent=2) + "\n", encoding="utf-8")
        pairs.append((f"STRATEGY_{p}", name))
    print(_write_summary(out, pairs), end="")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "opt": cmd_opt,
            "counterexample": cmd_counterexample, "replay-check": cmd_replay, "export": cmd_export}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"asflow: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    try:
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"asflow: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (AsflowError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"asflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
