"""Node-level semantics and a deterministic multi-node network simulator.

A single node alternates between a consumer phase, where it takes the next
message from its network strategy, and a producer phase, where it runs the
selected handler. ``step_system`` performs exactly one such transition.

``run_simulation`` composes several nodes. Handlers run atomically. A message
sent by one node is queued for its recipient and shows up as an observed
event in the trace of every other simulated node. Externally scripted
messages are stamped with the recipient's clock when consumed and are
likewise observed by everybody else.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .frontend import NetMessage, StrategyScript
from .interpreter import (EMPTY_HISTORY, CmdConfig, History, PcMonitor,
                          run_handler, step_command, initial_store)
from .lattice import Lattice
from .potential import PotentialLedger, wf_strategy_online
from .syntax import Handler, Program, Stop
from .typesystem import TypeEnvs, build_lambda, envs_for, system_lattice
from .values import SizedValue

DIRECTIONS = ("out", "in", "obs")


@dataclass(frozen=True)
class TraceEvent:
    direction: str  # out | in | obs
    channel: str
    t: int
    bit: int
    value: SizedValue

    def __str__(self):
        arrow = {"out": "->", "in": "<-", "obs": "~"}[self.direction]
        return f"{arrow}{self.channel}({self.t},{self.bit},{self.value})"


@dataclass(frozen=True)
class Message:
    channel: str
    t: int
    bit: int
    value: SizedValue


class StrategyViolation(RuntimeError):
    def __init__(self, node: str, msg: Message, violations):
        self.node = node
        self.msg = msg
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{node}: ill-formed incoming message on {msg.channel}: {detail}")


def handler_lookup(p: Program, channel: str) -> Optional[Handler]:
    """First handler of ``p`` serving ``channel`` (qualified or bare), if any."""
    node, _, name = channel.rpartition("/")
    if node and node != p.node:
        return None
    return p.handler(name)


def local_env_for(p: Program, script: StrategyScript) -> dict:
    """Local streams for ``p``: one per declared local channel."""
    return {lc.name: tuple(script.local.get(lc.name, ())) for lc in p.locals}


# -- single node -------------------------------------------------------------

class ScriptedStrategy:
    """A finite strategy that replays a script.

    Entries become available once the recipient's trace holds ``after``
    events; timestamps are the recipient's clock at consumption.
    """

    def __init__(self, script: StrategyScript, node: Optional[str] = None):
        self.script = script.resolved(node) if node else script

    def next(self, cursor: int, trace, history: History) -> Optional[Message]:
        net = self.script.net
        if cursor >= len(net):
            return None
        m = net[cursor]
        if m.after > len(trace):
            return None
        return Message(m.channel, history.time, m.bit, m.value)


@dataclass(frozen=True)
class SystemState:
    program: Program
    store: dict
    local: dict
    history: History = EMPTY_HISTORY
    trace: tuple = ()
    cursor: int = 0
    phase: str = "consumer"  # consumer | producer
    handler: Optional[str] = None
    cfg: Optional[CmdConfig] = None
    outputs: tuple = ()

    @classmethod
    def initial(cls, program: Program, script: StrategyScript = StrategyScript()) -> "SystemState":
        return cls(program, initial_store(program), local_env_for(program, script))


def step_system(s: SystemState, strategy: ScriptedStrategy, envs: Optional[TypeEnvs] = None,
                unsafe: bool = False, monitor: bool = False) -> Optional[SystemState]:
    """One system transition, or None when no rule applies.

    ``envs`` enables the online well-formedness check on consumed messages.
    In ``unsafe`` mode dummy messages are neither consumed nor emitted.
    """
    if s.phase == "producer":
        cfg = s.cfg
        if isinstance(cfg.cmd, Stop):
            return replace(s, phase="consumer", handler=None, cfg=None, store=cfg.store,
                           local=cfg.local, history=cfg.history.append("ret"),
                           outputs=s.outputs + cfg.outputs)
        nxt, ev = step_command(cfg)
        if nxt.monitor is not None:
            nxt.monitor.check(nxt.bits)
        trace = s.trace
        if ev is not None and not (unsafe and ev.bit == 0):
            trace = trace + (TraceEvent("out", ev.channel, ev.t, ev.bit, ev.value),)
        return replace(s, cfg=nxt, trace=trace)

    msg = strategy.next(s.cursor, s.trace, s.history)
    if msg is None or (unsafe and msg.bit == 0):
        return None
    if envs is not None:
        bad = wf_strategy_online(envs.lam, envs.lattice, s.trace, msg.channel, msg.bit, msg.value)
        if bad:
            raise StrategyViolation(s.program.node, msg, bad)
    h = handler_lookup(s.program, msg.channel)
    if h is None:
        ev = TraceEvent("obs", msg.channel, msg.t, msg.bit, msg.value)
        return replace(s, cursor=s.cursor + 1, trace=s.trace + (ev,))
    hist = s.history.append("hl", msg.channel, msg.t, size=msg.value.size)
    mon = None
    if monitor and envs is not None:
        mon = PcMonitor.start(envs.with_param(h.param, h.param_type), h.mode)
    cfg = CmdConfig((msg.bit,), h.body, {h.param: msg.value}, s.store, s.local, hist, (), mon)
    ev = TraceEvent("in", msg.channel, msg.t, msg.bit, msg.value)
    return replace(s, cursor=s.cursor + 1, phase="producer", handler=h.name, cfg=cfg,
                   history=hist, trace=s.trace + (ev,))


def run_node(program: Program, script: StrategyScript, *, unsafe=False, checked=True,
             monitor=False, max_steps=100_000) -> SystemState:
    """Drive a single node with ``step_system`` until it can no longer step."""
    envs = envs_for(program)
    strategy = ScriptedStrategy(script, program.node)
    s = SystemState.initial(program, script)
    for _ in range(max_steps):
        nxt = step_system(s, strategy, envs if checked else None, unsafe, monitor)
        if nxt is None:
            return s
        s = nxt
    return s


# -- multi-node simulation ---------------------------------------------------

@dataclass
class NodeRun:
    program: Program
    envs: TypeEnvs
    store: dict
    local: dict
    script: tuple
    history: History = EMPTY_HISTORY
    trace: list = field(default_factory=list)
    cursor: int = 0
    outputs: list = field(default_factory=list)
    ledger: Optional[PotentialLedger] = None
    handlers_run: int = 0

    @property
    def name(self):
        return self.program.node

    def script_head(self) -> Optional[NetMessage]:
        if self.cursor < len(self.script):
            return self.script[self.cursor]
        return None


@dataclass(frozen=True)
class NodeResult:
    store: dict
    local: dict
    history: History
    trace: tuple
    outputs: tuple


@dataclass
class SimResult:
    status: str  # quiescent | budget | blocked | stalled
    nodes: dict
    log: list
    steps: int
    lam: dict
    lattice: Lattice

    def trace(self, node: str) -> tuple:
        return self.nodes[node].trace

    def log_text(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log)


SCHEDULERS = ("round-robin", "fifo")


class _Sim:
    def __init__(self, nodes, scheduler, budget, unsafe, checked, monitor, watchdog):
        if scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {scheduler!r}")
        programs = [p for p, _ in nodes]
        names = [p.node for p in programs]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node ids in simulation")
        self.lattice = system_lattice(programs)
        self.lam = build_lambda(programs)
        self.scheduler = scheduler
        self.budget = budget
        self.unsafe = unsafe
        self.checked = checked
        self.monitor = monitor
        self.watchdog = watchdog
        self.nodes = {}
        for p, script in nodes:
            script = script.resolved(p.node)
            self.nodes[p.node] = NodeRun(p, envs_for(p, self.lam, self.lattice),
                                         initial_store(p), local_env_for(p, script), script.net,
                                         ledger=PotentialLedger(self.lam))
        self.order = list(self.nodes)
        self.queue = deque()  # fifo: (recipient, Message)
        self.inbox = {n: deque() for n in self.order}  # round-robin
        self.log = []
        self.steps = 0

    # trace bookkeeping
    def _record(self, node: NodeRun, direction, msg: Message):
        node.trace.append(TraceEvent(direction, msg.channel, msg.t, msg.bit, msg.value))
        if msg.channel in self.lam:
            node.ledger.add(msg.channel, msg.bit)
        self.log.append({"node": node.name, "dir": direction, "ch": msg.channel, "t": msg.t,
                         "bit": msg.bit, "val": msg.value.base, "size": msg.value.size})

    def _observe(self, msg: Message, *exclude):
        for name in self.order:
            if name not in exclude:
                self._record(self.nodes[name], "obs", msg)

    def _enqueue(self, recipient: str, msg: Message):
        if self.scheduler == "fifo":
            self.queue.append((recipient, msg))
        else:
            self.inbox[recipient].append(msg)

    # one consumption, running the handler to completion
    def deliver(self, node: NodeRun, msg: Message, external: bool):
        if self.checked or external:
            bad = wf_strategy_online(self.lam, self.lattice, node.trace, msg.channel, msg.bit,
                                     msg.value, potential=node.ledger.q)
            if bad:
                raise StrategyViolation(node.name, msg, bad)
        if external:
            self._observe(msg, node.name)
        h = handler_lookup(node.program, msg.channel)
        if h is None:
            self._record(node, "obs", msg)
            return
        node.history = node.history.append("hl", msg.channel, msg.t, size=msg.value.size)
        self._record(node, "in", msg)
        mon = None
        if self.monitor:
            mon = PcMonitor.start(node.envs.with_param(h.param, h.param_type), h.mode)
        res = run_handler(msg.bit, h.body, h.param, msg.value, node.store, node.local,
                          node.history, monitor=mon, watchdog=self.watchdog)
        self.steps += res.steps
        node.handlers_run += 1
        node.store, node.local, node.history = res.store, res.local, res.history
        for out in res.outputs:
            node.outputs.append(out)
            self.log.append({"node": node.name, "dir": "local", "ch": out.channel, "t": out.t,
                             "bit": 1, "val": out.value.base, "size": out.value.size})
        for ev in res.emitted:
            if self.unsafe and ev.bit == 0:
                continue
            m = Message(ev.channel, ev.t, ev.bit, ev.value)
            self._record(node, "out", m)
            recipient = ev.channel.split("/", 1)[0]
            if recipient in self.nodes and recipient != node.name:
                self._observe(m, node.name, recipient)
                self._enqueue(recipient, m)
            elif recipient == node.name:
                self._observe(m, node.name)
                self._enqueue(recipient, m)
            else:
                self._observe(m, node.name)

    def _script_message(self, node: NodeRun) -> Optional[Message]:
        head = node.script_head()
        if head is None or head.after > len(node.trace):
            return None
        if self.unsafe and head.bit == 0:
            return None
        return Message(head.channel, node.history.time, head.bit, head.value)

    def _final_status(self):
        for node in self.nodes.values():
            head = node.script_head()
            if head is not None:
                return "blocked" if (self.unsafe and head.bit == 0) else "stalled"
        return "quiescent"

    def _over_budget(self):
        return self.budget is not None and self.steps >= self.budget

    def run(self) -> str:
        if self.scheduler == "fifo":
            while True:
                if self._over_budget():
                    return "budget"
                for node in self.nodes.values():
                    m = self._script_message(node)
                    if m is not None:
                        node.cursor += 1
                        self.deliver(node, m, external=True)
                        break
                else:
                    if not self.queue:
                        return self._final_status()
                    recipient, m = self.queue.popleft()
                    self.deliver(self.nodes[recipient], m, external=False)
        while True:
            progressed = False
            for node in self.nodes.values():
                if self._over_budget():
                    return "budget"
                m = self._script_message(node)
                if m is not None:
                    node.cursor += 1
                    self.deliver(node, m, external=True)
                    progressed = True
                elif self.inbox[node.name]:
                    self.deliver(node, self.inbox[node.name].popleft(), external=False)
                    progressed = True
            if not progressed:
                return self._final_status()

    def result(self, status) -> SimResult:
        nodes = {n: NodeResult(r.store, r.local, r.history, tuple(r.trace), tuple(r.outputs))
                 for n, r in self.nodes.items()}
        return SimResult(status, nodes, self.log, self.steps, self.lam, self.lattice)


DEFAULT_BUDGET = 200_000
DEFAULT_WATCHDOG = 100_000


def run_simulation(nodes, scheduler: str = "round-robin", budget: Optional[int] = DEFAULT_BUDGET,
                   *, unsafe: bool = False, checked: bool = True, monitor: bool = False,
                   watchdog: int = DEFAULT_WATCHDOG) -> SimResult:
    """Run ``nodes`` (pairs of program and script) to quiescence or budget.

    ``budget`` bounds the total number of command steps; it is checked
    between handlers so every handler runs to completion. With ``checked``
    off, messages exchanged between nodes skip the well-formedness check;
    scripted messages are always checked.
    """
    sim = _Sim(nodes, scheduler, budget, unsafe, checked, monitor, watchdog)
    status = sim.run()
    return sim.result(status)
