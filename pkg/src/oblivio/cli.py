"""Command-line entry point.

Exit codes: 0 success, 1 a security or bound finding or a type rejection,
2 a usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus
from .frontend import EMPTY_STRATEGY, ParseError, StrategyError, parse_program, parse_strategy
from .harness import equiv_trace, first_trace_difference, ni_differential_test, randomized_overhead
from .interpreter import StuckError, WatchdogError
from .lattice import LatticeError
from .netsim import SCHEDULERS, StrategyViolation, TraceEvent, run_node, run_simulation
from .typesystem import build_lambda, check_system, envs_for, handler_minimums, system_lattice
from .values import SizedValue

OK, FINDING, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- loading -----------------------------------------------------------------

def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_program(path: str):
    try:
        return parse_program(_read(path))
    except ParseError as exc:
        raise UsageError(f"{path}:{exc}") from None


def _load_strategy(path: str):
    try:
        return parse_strategy(_read(path))
    except StrategyError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _sibling_strategy(path: str):
    p = Path(path)
    sib = p.with_name(p.stem + ".strategy.json")
    return _load_strategy(str(sib)) if sib.is_file() else EMPTY_STRATEGY


def _nodes(args):
    """Pairs of program and script, plus a step budget, from the flags."""
    if args.scenario and args.program:
        raise UsageError("give either --scenario or --program, not both")
    if args.scenario:
        try:
            sc = corpus.scenario(args.scenario)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        budget = getattr(args, "budget", None)
        budget = budget if budget is not None else sc.budget
        return list(sc.nodes), budget, args.scenario
    if not args.program:
        raise UsageError("no programs given (use --program or --scenario)")
    programs = [(path, _load_program(path)) for path in args.program]
    explicit = {}
    for item in args.strategy or []:
        node, sep, path = item.partition("=")
        if not sep:
            if len(programs) != 1:
                raise UsageError("with several programs, write --strategy NODE=PATH")
            node, path = programs[0][1].node, item
        explicit[node] = _load_strategy(path)
    known = {p.node for _, p in programs}
    for node in explicit:
        if node not in known:
            raise UsageError(f"--strategy names unknown node {node!r}")
    nodes = [(p, explicit[p.node] if p.node in explicit else _sibling_strategy(path))
             for path, p in programs]
    return nodes, getattr(args, "budget", None), ",".join(p.node for _, p in programs)


def _typecheck(programs, out) -> bool:
    try:
        errors = check_system(programs)
    except LatticeError as exc:
        raise UsageError(str(exc)) from None
    for e in errors:
        print(f"{e.render()}", file=out)
    return not errors


def _emit(text: str, args):
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror or exc}") from None
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------

def cmd_check(args) -> int:
    nodes, _, _ = _nodes(args)
    programs = [p for p, _ in nodes]
    ok = _typecheck(programs, sys.stdout)
    lam = build_lambda(programs)
    lat = system_lattice(programs)
    for p in programs:
        mins = handler_minimums(p, envs_for(p, lam, lat))
        for h in p.handlers:
            m = mins[h.name]
            shown = "untypable" if m is None else str(m)
            print(f"{p.node}/{h.name}: annotated ${h.potential}, min={shown}")
    print("ok" if ok else "rejected")
    return OK if ok else FINDING


def _require_typed(args, programs) -> int | None:
    if args.unchecked:
        return None
    if not _typecheck(programs, sys.stderr):
        print("rejected by the type checker (use --unchecked to run anyway)", file=sys.stderr)
        return FINDING
    return None


def cmd_run(args) -> int:
    nodes, budget, _ = _nodes(args)
    if len(nodes) != 1:
        raise UsageError("run takes exactly one program; use simulate for several")
    rc = _require_typed(args, [nodes[0][0]])
    if rc is not None:
        return rc
    p, script = nodes[0]
    s = run_node(p, script, unsafe=args.unsafe, checked=not args.unchecked,
                 monitor=args.monitor, max_steps=budget or 100_000)
    lines = [str(e) for e in s.trace]
    lines += [f"{o.channel}@{o.t}: {o.value}" for o in s.outputs]
    lines += [f"{x} = {v}" for x, v in sorted(s.store.items())]
    lines.append(f"time {s.history.time}")
    _emit("\n".join(lines) + "\n", args)
    return OK


def cmd_simulate(args) -> int:
    nodes, budget, _ = _nodes(args)
    rc = _require_typed(args, [p for p, _ in nodes])
    if rc is not None:
        return rc
    res = run_simulation(nodes, args.scheduler, budget, unsafe=args.unsafe,
                         checked=not args.unchecked, monitor=args.monitor)
    _emit(res.log_text(), args)
    print(f"status: {res.status}; steps: {res.steps}", file=sys.stderr)
    if res.status == "blocked":
        print("a script cursor is blocked on a dummy message", file=sys.stderr)
    return OK


def cmd_ni(args) -> int:
    nodes, budget, name = _nodes(args)
    rc = _require_typed(args, [p for p, _ in nodes])
    if rc is not None:
        return rc
    lat = system_lattice([p for p, _ in nodes])
    levels = args.adv or [lat.bottom]
    text, ok = "", True
    for adv in levels:
        if adv not in lat:
            raise UsageError(f"unknown attacker level {adv!r}")
        rep = ni_differential_test(nodes, adv, args.trials, args.seed, name=name, budget=budget,
                                   scheduler=args.scheduler, unchecked=args.unchecked)
        text += rep.render()
        ok = ok and rep.passed
    _emit(text, args)
    return OK if ok else FINDING


def cmd_overhead(args) -> int:
    nodes, budget, name = _nodes(args)
    rc = _require_typed(args, [p for p, _ in nodes])
    if rc is not None:
        return rc
    text, ok = "", True
    for k in range(args.trials):
        seed = f"{args.seed}:{k}"
        try:
            extended, rep = randomized_overhead(nodes, seed, budget=budget)
        except ValueError as exc:
            raise UsageError(f"precondition: {exc}") from None
        dummies = sum(m.bit == 0 for _, s in extended for m in s.net)
        text += f"schedule {k} (seed {seed!r}, {dummies} injected dummies)\n" + rep.render()
        ok = ok and rep.passed
    _emit(text, args)
    return OK if ok else FINDING


def _read_log(path: str) -> dict:
    traces = {}
    for k, line in enumerate(_read(path).splitlines(), 1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            if r["dir"] == "local":
                continue
            ev = TraceEvent(r["dir"], r["ch"], r["t"], r["bit"], SizedValue(r["val"], r["size"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"{path}:{k}: malformed log record ({exc})") from None
        traces.setdefault(r["node"], []).append(ev)
    return traces


def cmd_trace_diff(args) -> int:
    a, b = _read_log(args.logs[0]), _read_log(args.logs[1])
    if args.scenario or args.program:
        nodes, _, _ = _nodes(args)
        programs = [p for p, _ in nodes]
        lam, lat = build_lambda(programs), system_lattice(programs)
        adv = args.adv[0] if args.adv else None
    else:
        lam, lat, adv = {}, None, None
    same = True
    for node in sorted(set(a) | set(b)):
        t1, t2 = a.get(node, []), b.get(node, [])
        if adv is None:
            k = next((i for i, (x, y) in enumerate(zip(t1, t2)) if x != y), None)
            if k is None and len(t1) != len(t2):
                k = min(len(t1), len(t2))
        else:
            if adv not in lat:
                raise UsageError(f"unknown attacker level {adv!r}")
            k = None if equiv_trace(adv, lam, lat, t1, t2) else \
                first_trace_difference(adv, lam, lat, t1, t2)
        if k is None:
            print(f"{node}: equivalent ({len(t1)} events)")
            continue
        same = False
        e1 = str(t1[k]) if k < len(t1) else "<end>"
        e2 = str(t2[k]) if k < len(t2) else "<end>"
        print(f"{node}: differ at event {k}: {e1} vs {e2}")
    return OK if same else FINDING


# -- argument parsing --------------------------------------------------------

def _nonneg(s: str) -> int:
    n = int(s)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _positive(s: str) -> int:
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oblivio", description="OblivIO type checker and simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, strategies=True):
        p.add_argument("--program", action="append", metavar="PATH", help="program file")
        p.add_argument("--scenario", choices=corpus.scenario_names(),
                       help="bundled example scenario")
        if strategies:
            p.add_argument("--strategy", action="append", metavar="[NODE=]PATH",
                           help="strategy script (default: <program>.strategy.json if present)")
        else:
            p.set_defaults(strategy=None)
        p.add_argument("--out", metavar="PATH", help="write the result here instead of stdout")

    def running(p):
        p.add_argument("--budget", type=_positive, help="step budget")
        p.add_argument("--unchecked", action="store_true",
                       help="skip type checking and checks on messages between nodes")
        p.add_argument("--scheduler", choices=SCHEDULERS, default="round-robin")

    p = sub.add_parser("check", help="type-check programs and infer potentials")
    common(p, strategies=False)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="run one node against its script")
    common(p)
    running(p)
    p.add_argument("--unsafe", action="store_true", help="suppress dummy traffic")
    p.add_argument("--monitor", action="store_true", help="check pc and bit stacks at every step")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="simulate several nodes and print the message log")
    common(p)
    running(p)
    p.add_argument("--unsafe", action="store_true", help="suppress dummy traffic")
    p.add_argument("--monitor", action="store_true", help="check pc and bit stacks at every step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ni-test", help="differential noninterference test")
    common(p)
    running(p)
    p.add_argument("--adv", action="append", metavar="LEVEL", help="attacker level (repeatable)")
    p.add_argument("--trials", type=_nonneg, default=100)
    p.add_argument("--seed", default="0")
    p.set_defaults(func=cmd_ni)

    p = sub.add_parser("overhead", help="check the dummy-traffic overhead bound")
    common(p)
    p.add_argument("--budget", type=_positive, help="step budget")
    p.add_argument("--unchecked", action="store_true", help="skip type checking")
    p.add_argument("--trials", type=_nonneg, default=10, help="number of random dummy schedules")
    p.add_argument("--seed", default="0")
    p.set_defaults(func=cmd_overhead)

    p = sub.add_parser("trace-diff", help="compare two simulation logs")
    p.add_argument("logs", nargs=2, metavar="LOG")
    common(p, strategies=False)
    p.add_argument("--adv", action="append", metavar="LEVEL",
                   help="compare up to this attacker level (needs the programs)")
    p.set_defaults(func=cmd_trace_diff)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code not in (0, None) else OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"oblivio: error: {exc}", file=sys.stderr)
        return USAGE
    except StrategyViolation as exc:
        print(f"oblivio: ill-formed strategy: {exc}", file=sys.stderr)
        return FINDING
    except (WatchdogError, StuckError) as exc:
        print(f"oblivio: execution aborted: {exc}", file=sys.stderr)
        return FINDING


if __name__ == "__main__":
    sys.exit(main())
