"""Security and overhead validation.

Equivalence relations up to an attacker level, the phantom-extension
relation between traces, a differential noninterference tester that runs
pairs of secret-mutated scenarios, and the dummy-traffic overhead check.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

from .frontend import NetMessage, StrategyScript
from .lattice import Lattice
from .netsim import (SimResult, StrategyViolation, SystemState, TraceEvent,
                     run_simulation)
from .potential import PotentialLedger, WfViolation, trace_potential, wf_strategy_online
from .syntax import BaseType
from .typesystem import TypeEnvs, build_lambda, check_system, system_lattice
from .values import INT_MAX, INT_MIN, SizedValue

__all__ = [
    "PotentialLedger", "WfViolation", "trace_potential", "wf_strategy_online",
    "equiv_value", "equiv_event", "equiv_trace", "equiv_store", "equiv_memory",
    "equiv_local", "equiv_state", "value_extends", "phantom_extension_check",
    "q_max", "NIReport", "ni_differential_test", "OverheadReport",
    "overhead_check", "check_overhead_traces", "script_extension_check",
    "inject_dummies", "dummy_targets", "randomized_overhead",
]


# -- equivalences up to an attacker level ------------------------------------

def equiv_value(lattice: Lattice, adv: str, level: str, v1: SizedValue, v2: SizedValue) -> bool:
    """Sizes always agree; bases agree when ``level`` flows to ``adv``."""
    if v1.size != v2.size:
        return False
    return not lattice.leq(level, adv) or v1.base == v2.base


def _labels(lam: dict, lattice: Lattice, channel: str):
    ct = lam.get(channel)
    if ct is None:
        # a channel nobody serves is read off the wire in the clear
        return lattice.bottom, lattice.bottom
    return ct.mode, ct.val


def equiv_event(adv: str, lam: dict, lattice: Lattice, e1: TraceEvent, e2: TraceEvent) -> bool:
    if (e1.direction, e1.channel, e1.t) != (e2.direction, e2.channel, e2.t):
        return False
    mode, val = _labels(lam, lattice, e1.channel)
    if lattice.leq(mode, adv) and e1.bit != e2.bit:
        return False
    return equiv_value(lattice, adv, val, e1.value, e2.value)


def equiv_trace(adv: str, lam: dict, lattice: Lattice, t1, t2) -> bool:
    """Pointwise event equivalence at ``adv``; lengths must match."""
    if len(t1) != len(t2):
        return False
    return all(equiv_event(adv, lam, lattice, a, b) for a, b in zip(t1, t2))


def first_trace_difference(adv, lam, lattice, t1, t2) -> Optional[int]:
    """Index of the first inequivalent event (or the shorter length)."""
    for k, (a, b) in enumerate(zip(t1, t2)):
        if not equiv_event(adv, lam, lattice, a, b):
            return k
    if len(t1) != len(t2):
        return min(len(t1), len(t2))
    return None


def equiv_store(adv: str, envs: TypeEnvs, s1: dict, s2: dict) -> bool:
    if s1.keys() != s2.keys():
        return False
    for x in s1:
        ty = envs.gamma.get(x)
        level = ty.level if ty is not None else envs.lattice.bottom
        if not equiv_value(envs.lattice, adv, level, s1[x], s2[x]):
            return False
    return True


def equiv_memory(adv: str, envs: TypeEnvs, m1: dict, m2: dict) -> bool:
    if m1.keys() != m2.keys():
        return False
    for x in m1:
        ty = envs.delta.get(x)
        level = ty.level if ty is not None else envs.lattice.bottom
        if not equiv_value(envs.lattice, adv, level, m1[x], m2[x]):
            return False
    return True


def equiv_local(adv: str, envs: TypeEnvs, l1: dict, l2: dict) -> bool:
    if l1.keys() != l2.keys():
        return False
    for ch in l1:
        ty = envs.pi.get(ch)
        level = ty.level if ty is not None else envs.lattice.bottom
        if envs.lattice.leq(level, adv) and tuple(l1[ch]) != tuple(l2[ch]):
            return False
    return True


def equiv_state(adv: str, envs: TypeEnvs, s1: SystemState, s2: SystemState) -> bool:
    """Equivalence of two consumer states of the same program."""
    if s1.phase != "consumer" or s2.phase != "consumer":
        raise ValueError("equiv_state compares consumer states only")
    if s1.program != s2.program:
        return False
    return (equiv_store(adv, envs, s1.store, s2.store)
            and equiv_local(adv, envs, s1.local, s2.local)
            and equiv_trace(adv, envs.lam, envs.lattice, s1.trace, s2.trace))


# -- phantom extension -------------------------------------------------------

def value_extends(v1: SizedValue, v2: SizedValue) -> bool:
    return v1.base == v2.base and v1.size <= v2.size


def phantom_extension_check(t1, t2) -> bool:
    """Whether ``t2`` is ``t1`` with dummies interleaved and values padded.

    Timestamps are not compared: dummy handlers advance the clock.
    """
    i = 0
    for ev in t2:
        if i < len(t1):
            g = t1[i]
            if g.bit != 1:
                return False
            if (ev.bit == 1 and ev.direction == g.direction and ev.channel == g.channel
                    and value_extends(g.value, ev.value)):
                i += 1
                continue
        if ev.bit != 0:
            return False
    return i == len(t1)


# -- noninterference ---------------------------------------------------------

def _random_int(rng: random.Random) -> int:
    if rng.random() < 0.1:
        return rng.randint(INT_MIN, INT_MAX)
    return rng.randint(-1000, 1000)


_ALPHABET = "abcdefghijklmnopqrstuvwxyz ABC!?"


def _random_string(rng: random.Random, max_len: int) -> str:
    n = rng.randint(0, max_len)
    return "".join(rng.choice(_ALPHABET) for _ in range(n))


def _resample(rng: random.Random, v: SizedValue) -> SizedValue:
    """A fresh base of the same sort that fits the same public size."""
    if v.is_int:
        return SizedValue(_random_int(rng), v.size)
    return SizedValue(_random_string(rng, v.size), v.size)


@dataclass(frozen=True)
class Mutation:
    node: str
    kind: str  # store | val | bit | local
    key: object  # variable name, script index or (channel, index)
    value: object

    def __str__(self):
        return f"{self.node}.{self.kind}[{self.key}] := {self.value}"


def _secret_mutations(nodes, lam, lattice, adv, rng) -> list:
    """Randomly resample every secret degree of freedom of a scenario."""
    out = []
    for p, script in nodes:
        script = script.resolved(p.node)
        for v in p.globals:
            if lattice.leq(v.type.level, adv):
                continue
            init = v.init if v.init is not None else (0 if v.type.base is BaseType.INT else "")
            cur = SizedValue(init, v.pad if v.pad is not None else SizedValue.of(init).size)
            out.append(Mutation(p.node, "store", v.name, _resample(rng, cur)))
        for k, m in enumerate(script.net):
            mode, val = _labels(lam, lattice, m.channel)
            if not lattice.leq(val, adv):
                out.append(Mutation(p.node, "val", k, _resample(rng, m.value)))
            if not lattice.leq(mode, adv) and rng.random() < 0.5:
                out.append(Mutation(p.node, "bit", k, 1 - m.bit))
        for lc in p.locals:
            if lattice.leq(lc.type.level, adv):
                continue
            for k, entry in enumerate(script.local.get(lc.name, ())):
                if rng.random() < 0.2:
                    new = None
                elif lc.type.base is BaseType.INT:
                    new = SizedValue.of(_random_int(rng))
                else:
                    size = entry.size if entry is not None else 8
                    new = SizedValue(_random_string(rng, size), size)
                out.append(Mutation(p.node, "local", (lc.name, k), new))
    return out


def apply_mutations(nodes, mutations) -> tuple:
    """The scenario ``nodes`` with ``mutations`` applied."""
    by_node = {}
    for mu in mutations:
        by_node.setdefault(mu.node, []).append(mu)
    out = []
    for p, script in nodes:
        mus = by_node.get(p.node)
        if not mus:
            out.append((p, script))
            continue
        script = script.resolved(p.node)
        globals_ = {v.name: v for v in p.globals}
        net = list(script.net)
        local = {ch: list(vs) for ch, vs in script.local.items()}
        for mu in mus:
            match mu.kind:
                case "store":
                    d = globals_[mu.key]
                    globals_[mu.key] = replace(d, init=mu.value.base, pad=mu.value.size)
                case "val":
                    net[mu.key] = replace(net[mu.key], value=mu.value)
                case "bit":
                    net[mu.key] = replace(net[mu.key], bit=mu.value)
                case "local":
                    ch, k = mu.key
                    local[ch][k] = mu.value
        p2 = replace(p, globals=tuple(globals_[v.name] for v in p.globals))
        out.append((p2, StrategyScript(tuple(net), {ch: tuple(vs) for ch, vs in local.items()})))
    return tuple(out)


@dataclass
class NIReport:
    scenario: str
    adv: str
    seed: object
    trials: int = 0
    resampled: int = 0
    counterexample: Optional[dict] = None
    passed_trials: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.counterexample is None

    def render(self) -> str:
        lines = [f"ni-test scenario={self.scenario} adv={self.adv} seed={self.seed} "
                 f"trials={self.trials} resampled={self.resampled}"]
        for k in self.passed_trials:
            lines.append(f"  trial {k}: pass")
        if self.counterexample is None:
            lines.append("result: PASS")
        else:
            cx = self.counterexample
            lines.append(f"  trial {cx['trial']}: FAIL (replay with seed {cx['seed']!r})")
            lines.append(f"  node {cx['node']}: {cx['reason']}")
            for mu in cx["mutations"]:
                lines.append(f"    mutation {mu}")
            if cx.get("event") is not None:
                lines.append(f"    base:    {cx['event'][0]}")
                lines.append(f"    mutated: {cx['event'][1]}")
            lines.append("result: FAIL")
        return "\n".join(lines) + "\n"


def _key(nodes) -> tuple:
    parts = []
    for p, s in nodes:
        store = tuple((v.name, v.init, v.pad) for v in p.globals)
        local = tuple(sorted(s.local.items()))
        parts.append((p.node, store, s.net, local))
    return tuple(parts)


class _Runner:
    """Memoized simulation of scenario variants."""

    def __init__(self, budget, scheduler, checked, watchdog):
        self.budget = budget
        self.scheduler = scheduler
        self.checked = checked
        self.watchdog = watchdog
        self.cache = {}

    def __call__(self, nodes) -> SimResult:
        k = _key(nodes)
        if k not in self.cache:
            try:
                self.cache[k] = run_simulation(nodes, self.scheduler, self.budget,
                                               checked=self.checked, watchdog=self.watchdog)
            except StrategyViolation as exc:
                self.cache[k] = exc
        res = self.cache[k]
        if isinstance(res, StrategyViolation):
            raise res
        return res


def _compare(adv, base: SimResult, other: SimResult):
    """First observable difference between two runs, or None."""
    if base.status != other.status:
        return "*", f"status {base.status} vs {other.status}", None
    for node in base.nodes:
        t1, t2 = base.trace(node), other.trace(node)
        k = first_trace_difference(adv, base.lam, base.lattice, t1, t2)
        if k is not None:
            e1 = str(t1[k]) if k < len(t1) else "<end of trace>"
            e2 = str(t2[k]) if k < len(t2) else "<end of trace>"
            return node, f"traces differ at event {k} (lengths {len(t1)}, {len(t2)})", (e1, e2)
    return None


def _minimize(run, nodes, adv, base, mutations):
    """Shrink a failing mutation list by repeated halving."""
    def fails(ms):
        try:
            return _compare(adv, base, run(apply_mutations(nodes, ms))) is not None
        except StrategyViolation:
            return False

    while len(mutations) > 1:
        half = len(mutations) // 2
        if fails(mutations[:half]):
            mutations = mutations[:half]
        elif fails(mutations[half:]):
            mutations = mutations[half:]
        else:
            break
    return mutations


def ni_differential_test(nodes, adv: str, trials: int = 100, seed=0, *, name: str = "",
                         budget: Optional[int] = None, scheduler: str = "round-robin",
                         unchecked: bool = False, max_resample: int = 20,
                         watchdog: int = 100_000) -> NIReport:
    """Run ``trials`` secret-mutated variants of ``nodes`` against the base run.

    Every variant agrees with the base scenario on everything visible at
    ``adv``: public store values, all sizes, channels, order and public bits.
    A variant whose script is not well formed is resampled. Unless
    ``unchecked`` is set, the programs must type-check first.
    """
    nodes = tuple(nodes)
    programs = [p for p, _ in nodes]
    lattice = system_lattice(programs)
    if adv not in lattice:
        raise ValueError(f"unknown attacker level {adv!r}")
    if not unchecked:
        errors = check_system(programs)
        if errors:
            raise ValueError(f"scenario does not type-check: {errors[0]}")
    lam = build_lambda(programs)
    run = _Runner(budget, scheduler, not unchecked, watchdog)
    report = NIReport(name, adv, seed)
    base = run(nodes)
    for trial in range(trials):
        rng = random.Random(f"{seed}:{trial}")
        for _ in range(max_resample):
            mutations = _secret_mutations(nodes, lam, lattice, adv, rng)
            try:
                other = run(apply_mutations(nodes, mutations))
                break
            except StrategyViolation:
                report.resampled += 1
        else:
            # fall back to keeping every script bit as it was
            mutations = [mu for mu in _secret_mutations(nodes, lam, lattice, adv, rng)
                         if mu.kind != "bit"]
            other = run(apply_mutations(nodes, mutations))
        report.trials += 1
        diff = _compare(adv, base, other)
        if diff is None:
            report.passed_trials.append(trial)
            continue
        small = _minimize(run, nodes, adv, base, mutations)
        node, reason, event = _compare(adv, base, run(apply_mutations(nodes, small)))
        report.counterexample = {"trial": trial, "seed": f"{seed}:{trial}", "node": node,
                                 "reason": reason, "event": event,
                                 "mutations": [str(mu) for mu in small]}
        break
    return report


# -- overhead ----------------------------------------------------------------

def q_max(lam: dict) -> int:
    """Largest potential of any network channel (0 for an empty environment)."""
    return max((ct.potential for ct in lam.values()), default=0)


def script_extension_check(s1: StrategyScript, s2: StrategyScript) -> Optional[str]:
    """None when the genuine part of ``s2`` extends ``s1`` message by message.

    ``s1`` must be genuine only; ``s2`` may interleave dummies and pad
    values. Local streams must agree. Returns a reason on failure.
    """
    genuine = [m for m in s2.net if m.bit == 1]
    if any(m.bit != 1 for m in s1.net):
        return "the reference script contains dummy messages"
    for m in s1.net + tuple(genuine):
        if m.after:
            # dummies lengthen the safe trace, so a length gate opens earlier there
            return f"genuine message on {m.channel} is gated by 'after: {m.after}'"
    if len(genuine) != len(s1.net):
        return f"{len(s1.net)} genuine messages vs {len(genuine)}"
    for k, (a, b) in enumerate(zip(s1.net, genuine)):
        if a.channel != b.channel or not value_extends(a.value, b.value):
            return f"genuine message {k} differs: {a.channel}{a.value} vs {b.channel}{b.value}"
    if {k: tuple(v) for k, v in s1.local.items()} != {k: tuple(v) for k, v in s2.local.items()}:
        return "local streams differ"
    return None


@dataclass
class OverheadReport:
    bound_factor: int
    per_node: dict = field(default_factory=dict)  # node -> dict
    status: tuple = ("", "")
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def ratio(self) -> float:
        """Largest per-node ratio |safe trace| / |unsafe trace|."""
        ratios = [r["ratio"] for r in self.per_node.values() if r["ratio"] is not None]
        return max(ratios, default=1.0)

    def render(self) -> str:
        lines = [f"overhead bound factor 1 + q_max = {self.bound_factor}; "
                 f"status unsafe={self.status[0]} safe={self.status[1]}"]
        for node, r in self.per_node.items():
            ratio = "n/a" if r["ratio"] is None else f"{r['ratio']:.3f}"
            lines.append(f"  {node}: unsafe={r['unsafe']} safe={r['safe']} ratio={ratio} "
                         f"extension={'ok' if r['extension'] else 'FAIL'}")
        for f in self.failures:
            lines.append(f"  failure: {f}")
        lines.append(f"max ratio: {self.ratio:.3f}")
        lines.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"


def _genuine_multiset(trace) -> Counter:
    return Counter((e.direction, e.channel, e.value.base) for e in trace if e.bit == 1)


def check_overhead_traces(lam: dict, t1, t2, node: str = "") -> tuple[dict, list]:
    """Compare one node's unsafe trace ``t1`` with its safe trace ``t2``."""
    factor = 1 + q_max(lam)
    failures = []
    ext = phantom_extension_check(t1, t2)
    if not ext:
        failures.append(f"{node}: safe trace is not a phantom extension of the unsafe trace")
    if len(t2) > len(t1) * factor:
        failures.append(f"{node}: {len(t2)} events exceed {len(t1)} * {factor}")
    if _genuine_multiset(t1) != _genuine_multiset(t2):
        failures.append(f"{node}: genuine traffic differs")
    ratio = len(t2) / len(t1) if t1 else None
    return {"unsafe": len(t1), "safe": len(t2), "ratio": ratio, "extension": ext}, failures


def overhead_check(nodes1, nodes2, budget: Optional[int] = None,
                   scheduler: str = "fifo") -> OverheadReport:
    """Run ``nodes1`` under the suppressing semantics and ``nodes2`` normally.

    ``nodes2`` must use the same programs with scripts extending those of
    ``nodes1``. Raises ``ValueError`` when that precondition fails.
    """
    nodes1, nodes2 = tuple(nodes1), tuple(nodes2)
    if [p for p, _ in nodes1] != [p for p, _ in nodes2]:
        raise ValueError("overhead runs must use the same programs")
    for (p, s1), (_, s2) in zip(nodes1, nodes2):
        why = script_extension_check(s1.resolved(p.node), s2.resolved(p.node))
        if why is not None:
            raise ValueError(f"{p.node}: script does not extend the reference: {why}")
    r1 = run_simulation(nodes1, scheduler, budget, unsafe=True)
    r2 = run_simulation(nodes2, scheduler, budget)
    report = OverheadReport(1 + q_max(r1.lam), status=(r1.status, r2.status))
    for node in r1.nodes:
        row, fails = check_overhead_traces(r1.lam, r1.trace(node), r2.trace(node), node)
        report.per_node[node] = row
        report.failures += fails
    return report


def inject_dummies(nodes, targets: dict, rng: random.Random, max_per_node: int = 3,
                   max_after: int = 20) -> tuple:
    """Scripts with up to ``max_per_node`` dummies added for each node in ``targets``.

    ``targets`` maps a node id to the channels that may receive dummies.
    Dummies get random ``after`` thresholds and are placed after every
    genuine message whose threshold is not larger.
    """
    out = []
    for p, script in nodes:
        chans = targets.get(p.node)
        if not chans:
            out.append((p, script))
            continue
        script = script.resolved(p.node)
        extra = []
        lam = build_lambda([p])
        for _ in range(rng.randint(0, max_per_node)):
            ch = rng.choice(chans)
            qualified = ch if "/" in ch else f"{p.node}/{ch}"
            base = lam[qualified].base
            v = SizedValue.of(0) if base is BaseType.INT else SizedValue("", 0)
            extra.append(NetMessage(qualified, 0, v, rng.randint(0, max_after)))
        net = sorted(list(script.net) + extra, key=lambda m: m.after)
        out.append((p, StrategyScript(tuple(net), dict(script.local))))
    return tuple(out)


def dummy_targets(nodes) -> dict:
    """Channels of each node whose mode is secret, i.e. those that may carry dummies."""
    programs = [p for p, _ in nodes]
    lattice = system_lattice(programs)
    return {p.node: [h.name for h in p.handlers if not lattice.is_bottom(h.mode)]
            for p in programs}


def randomized_overhead(nodes, seed=0, *, targets: Optional[dict] = None,
                        budget: Optional[int] = None, attempts: int = 50, **inject):
    """Overhead check against a random well-formed dummy schedule.

    Schedules that break well-formedness are redrawn from the same seeded
    generator. Returns the injected scenario and the report.
    """
    nodes = tuple(nodes)
    targets = dummy_targets(nodes) if targets is None else targets
    rng = random.Random(f"overhead:{seed}")
    for _ in range(attempts):
        nodes2 = inject_dummies(nodes, targets, rng, **inject)
        try:
            return nodes2, overhead_check(nodes, nodes2, budget)
        except StrategyViolation:
            continue
    # the genuine-only schedule is always available
    return nodes, overhead_check(nodes, nodes, budget)
