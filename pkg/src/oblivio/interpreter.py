"""Small-step execution of handler bodies.

A configuration holds the mode-bit stack, the remaining command, the
handler's one-variable memory, the global store, the local channel streams
and the history. Bit stacks are tuples with the top at the end.

The clock is derived from the history: every event costs ``1 + z`` where
``z`` is the public size it mentions (0 for sizeless events), so two runs
that agree on all public sizes agree on every timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .syntax import (POP, STOP, Assign, BinOp, If, Input, IntLit, Oblif,
                     OblivAssign, Output, Pop, Seq, Skip, Send, Stop, StrLit,
                     Var, While, seq)
from .values import CtCounters, SizedValue, apply_binop, safe_select


class StuckError(RuntimeError):
    """A configuration with no applicable rule (only reachable without typing)."""

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history


class WatchdogError(RuntimeError):
    pass


class MonitorError(AssertionError):
    pass


# -- history -----------------------------------------------------------------

SIZELESS = ("skp", "whl", "pop", "ret")


@dataclass(frozen=True)
class HistEvent:
    kind: str  # skp asn casn in out br obr whl pop hl ret
    args: tuple = ()
    size: int = 0

    @property
    def cost(self) -> int:
        return 1 + self.size


class History:
    """Append-only event list sharing structure between extensions."""

    __slots__ = ("prev", "event", "time", "length")

    def __init__(self, prev: Optional["History"] = None, event: Optional[HistEvent] = None):
        self.prev = prev
        self.event = event
        if event is None:
            self.time = 0
            self.length = 0
        else:
            self.time = prev.time + event.cost
            self.length = prev.length + 1
            # the clock must be strictly increasing along appends
            assert self.time > prev.time

    def append(self, kind: str, *args, size: int = 0) -> "History":
        return History(self, HistEvent(kind, args, size))

    def events(self) -> list:
        out = []
        node = self
        while node.event is not None:
            out.append(node.event)
            node = node.prev
        out.reverse()
        return out

    def __len__(self):
        return self.length

    def __repr__(self):
        return f"History(len={self.length}, time={self.time})"


EMPTY_HISTORY = History()


def time_of(h: History) -> int:
    return h.time


# -- expressions -------------------------------------------------------------

def eval_expr(e, mem: dict, store: dict, counters: Optional[CtCounters] = None) -> SizedValue:
    match e:
        case IntLit(n):
            return SizedValue.of(n)
        case StrLit(s):
            return SizedValue.of(s)
        case Var(x):
            if x in mem:
                return mem[x]
            if x in store:
                return store[x]
            raise StuckError(f"unbound variable '{x}'")
        case BinOp(op, a, b):
            return apply_binop(op, eval_expr(a, mem, store, counters),
                               eval_expr(b, mem, store, counters), counters)
    raise TypeError(f"not an expression: {e!r}")


# -- configurations ----------------------------------------------------------

@dataclass(frozen=True)
class OutEvent:
    channel: str
    t: int
    bit: int
    value: SizedValue


@dataclass(frozen=True)
class LocalOutput:
    channel: str
    t: int
    value: SizedValue


@dataclass(frozen=True)
class CmdConfig:
    bits: tuple
    cmd: object
    mem: dict
    store: dict
    local: dict  # ch -> tuple of SizedValue | None
    history: History
    outputs: tuple = ()
    monitor: Optional["PcMonitor"] = None

    @property
    def top(self) -> int:
        return self.bits[-1]


def _read_stream(local: dict, ch: str):
    stream = local.get(ch, ())
    if not stream:
        return False, None
    return True, stream[0]


def step_command(cfg: CmdConfig) -> tuple[CmdConfig, Optional[OutEvent]]:
    """One small step; returns the new configuration and any network emission."""
    c = cfg.cmd
    h = cfg.history
    match c:
        case Stop():
            raise StuckError("no step from stop", h)
        case Skip():
            return replace(cfg, cmd=STOP, history=h.append("skp")), None
        case Seq(c1, c2):
            sub, ev = step_command(replace(cfg, cmd=c1))
            rest = c2 if isinstance(sub.cmd, Stop) else Seq(sub.cmd, c2)
            return replace(sub, cmd=rest), ev
        case Assign(x, e):
            if cfg.top != 1:
                raise StuckError(f"'{x} = ...' reached in phantom mode", h)
            v = eval_expr(e, cfg.mem, cfg.store)
            return replace(cfg, cmd=STOP, store={**cfg.store, x: v},
                           history=h.append("asn", x, size=v.size)), None
        case OblivAssign(x, e):
            old = cfg.store[x]
            new = eval_expr(e, cfg.mem, cfg.store)
            v = safe_select(cfg.top, old, new)
            return replace(cfg, cmd=STOP, store={**cfg.store, x: v},
                           history=h.append("casn", x, size=v.size)), None
        case Input(x, ch, e):
            old = cfg.store[x]
            n = eval_expr(e, cfg.mem, cfg.store).base
            z = max(old.size, n)
            base, local = old.base, cfg.local
            present, head = _read_stream(cfg.local, ch)
            if cfg.top == 1 and present:
                if head is None:
                    local = {**local, ch: local[ch][1:]}
                elif head.size <= n:
                    base = head.base
                    local = {**local, ch: local[ch][1:]}
            v = SizedValue(base, z)
            return replace(cfg, cmd=STOP, store={**cfg.store, x: v}, local=local,
                           history=h.append("in", x, ch, size=z)), None
        case Send(target, e):
            v = eval_expr(e, cfg.mem, cfg.store)
            h2 = h.append("out", target, size=v.size)
            return replace(cfg, cmd=STOP, history=h2), OutEvent(target, h2.time, cfg.top, v)
        case Output(ch, e):
            v = eval_expr(e, cfg.mem, cfg.store)
            h2 = h.append("lout", ch, size=v.size)
            outs = cfg.outputs
            if cfg.top == 1:
                outs = outs + (LocalOutput(ch, h2.time, v),)
            return replace(cfg, cmd=STOP, history=h2, outputs=outs), None
        case If(e, c1, c2):
            v = eval_expr(e, cfg.mem, cfg.store)
            i = 1 if v.base != 0 else 2
            return replace(cfg, cmd=c1 if i == 1 else c2,
                           history=h.append("br", i, size=v.size)), None
        case While(e, body):
            if cfg.top != 1:
                raise StuckError("'while' reached in phantom mode", h)
            unrolled = If(e, Seq(body, c), Skip(), pos=c.pos)
            return replace(cfg, cmd=unrolled, history=h.append("whl")), None
        case Oblif(e, c1, c2):
            v = eval_expr(e, cfg.mem, cfg.store)
            b = cfg.top
            b1, b2 = (b, 0) if v.base != 0 else (0, b)
            mon = cfg.monitor.push(e) if cfg.monitor is not None else None
            # b1 ends on top: it governs c1, and is popped before c2 runs
            return replace(cfg, bits=cfg.bits + (b2, b1), cmd=seq(c1, POP, c2, POP),
                           history=h.append("obr", size=v.size), monitor=mon), None
        case Pop():
            if len(cfg.bits) < 2:
                raise StuckError("pop would empty the bit stack", h)
            mon = cfg.monitor.pop() if cfg.monitor is not None else None
            return replace(cfg, bits=cfg.bits[:-1], cmd=STOP,
                           history=h.append("pop"), monitor=mon), None
    raise StuckError(f"no rule for {c!r}", h)


# -- runtime pc-stack monitor ------------------------------------------------

@dataclass(frozen=True)
class PcMonitor:
    """Tracks a pc level for every bit on the stack and checks the pairing.

    The bottom level is the handler's mode label. Each oblivious branch
    pushes ``pc ⊔ ℓ`` twice, where ``ℓ`` is the guard's static level.
    """
    envs: object  # TypeEnvs with the handler parameter bound
    stack: tuple

    @classmethod
    def start(cls, envs, mode: str) -> "PcMonitor":
        return cls(envs, (mode,))

    def push(self, guard) -> "PcMonitor":
        from .typesystem import type_expr
        _, lv = type_expr(self.envs, guard)
        pc = self.envs.lattice.lub(self.stack[-1], lv)
        return replace(self, stack=self.stack + (pc, pc))

    def pop(self) -> "PcMonitor":
        return replace(self, stack=self.stack[:-1])

    def check(self, bits: tuple):
        lat = self.envs.lattice
        pcs = self.stack
        if len(pcs) != len(bits):
            raise MonitorError(f"pc stack {pcs} and bit stack {bits} differ in height")
        for below, above in zip(pcs, pcs[1:]):
            if lat.is_bottom(above) or not lat.leq(below, above):
                raise MonitorError(f"ill-formed pc stack {pcs}")
        if lat.is_bottom(pcs[0]) and bits[0] != 1:
            raise MonitorError(f"phantom bit under public pc: bits {bits}, pcs {pcs}")


# -- handlers ----------------------------------------------------------------

DEFAULT_WATCHDOG = 1_000_000


@dataclass(frozen=True)
class HandlerResult:
    store: dict
    local: dict
    history: History
    emitted: tuple
    outputs: tuple
    steps: int


def run_handler(bit: int, body, param: str, arg: SizedValue, store: dict, local: dict,
                history: History, *, monitor: Optional[PcMonitor] = None,
                watchdog: int = DEFAULT_WATCHDOG, on_step=None) -> HandlerResult:
    """Run ``body`` to completion from bit stack ``[bit]`` and append ``ret``.

    The caller records the triggering ``hl`` event before calling. ``on_step``
    sees every ``(before, after, emission)`` triple, which the property tests
    use to inspect individual steps.
    """
    cfg = CmdConfig((bit,), body, {param: arg}, store, local, history, (), monitor)
    if monitor is not None:
        monitor.check(cfg.bits)
    emitted = []
    steps = 0
    while not isinstance(cfg.cmd, Stop):
        if steps >= watchdog:
            raise WatchdogError(f"handler exceeded {watchdog} steps")
        nxt, ev = step_command(cfg)
        steps += 1
        if nxt.monitor is not None:
            nxt.monitor.check(nxt.bits)
        if on_step is not None:
            on_step(cfg, nxt, ev)
        if ev is not None:
            emitted.append(ev)
        cfg = nxt
    if len(cfg.bits) != 1:
        raise StuckError(f"handler finished with bit stack {cfg.bits}", cfg.history)
    return HandlerResult(cfg.store, cfg.local, cfg.history.append("ret"),
                         tuple(emitted), cfg.outputs, steps)


def initial_store(program) -> dict:
    """Store built from the declared initializers (0 and "" by default)."""
    from .syntax import BaseType
    store = {}
    for v in program.globals:
        init = v.init
        if init is None:
            init = 0 if v.type.base is BaseType.INT else ""
        sv = SizedValue.of(init)
        store[v.name] = SizedValue(init, v.pad) if v.pad is not None else sv
    return store
