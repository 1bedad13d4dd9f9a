"""Trace potential and the online well-formedness check for incoming messages.

Genuine events on a channel add that channel's potential; dummy events cost
one unit and are only allowed while the running potential can pay for them.
The direction of an event does not matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .syntax import BaseType
from .values import size_of


class UnknownChannel(KeyError):
    pass


def _potential_of(lam: dict, channel: str) -> int:
    ct = lam.get(channel)
    if ct is None:
        raise UnknownChannel(channel)
    return ct.potential


@dataclass
class PotentialLedger:
    """Running fold of the trace potential; ``q`` is None once ill-formed."""
    lam: dict
    q: Optional[int] = 0
    deltas: list = field(default_factory=list)

    def add(self, channel: str, bit: int) -> Optional[int]:
        delta = _potential_of(self.lam, channel) if bit else -1
        self.deltas.append(delta)
        if self.q is not None:
            self.q += delta
            if self.q < 0:
                self.q = None
        return self.q

    def copy(self) -> "PotentialLedger":
        return PotentialLedger(self.lam, self.q, list(self.deltas))


def trace_potential(lam: dict, trace) -> Optional[int]:
    """Potential of ``trace``, or None when a dummy arrives with nothing to pay."""
    ledger = PotentialLedger(lam)
    for ev in trace:
        if ledger.add(ev.channel, ev.bit) is None:
            return None
    return ledger.q


@dataclass(frozen=True)
class WfViolation:
    clause: str  # unknown-channel | sort | size | public-dummy | potential
    detail: str

    def __str__(self):
        return f"{self.clause}: {self.detail}"


def wf_strategy_online(lam: dict, lattice, trace, channel: str, bit: int, value,
                       potential: Optional[int] = ..., ) -> list[WfViolation]:
    """Violated well-formedness clauses for delivering ``value`` on ``channel``.

    ``potential`` may carry the already-folded potential of ``trace`` (None
    meaning ill-formed); otherwise it is computed from ``trace``.
    """
    out = []
    ct = lam.get(channel)
    if ct is None:
        return [WfViolation("unknown-channel", f"'{channel}' has no handler type")]
    is_int = isinstance(value.base, int)
    if is_int != (ct.base is BaseType.INT):
        out.append(WfViolation("sort", f"'{channel}' carries {ct.base}, got {value.base!r}"))
    if size_of(value.base) > value.size:
        out.append(WfViolation("size", f"size_of({value.base!r}) exceeds {value.size}"))
    if bit == 0:
        if lattice.is_bottom(ct.mode):
            out.append(WfViolation("public-dummy", f"dummy on '{channel}' whose mode is public"))
        if potential is ...:
            potential = trace_potential(lam, trace)
        need = 1 + ct.potential
        if potential is None or potential < need:
            have = "ill-formed" if potential is None else potential
            out.append(WfViolation("potential",
                                   f"dummy on '{channel}' needs potential {need}, trace has {have}"))
    return out
