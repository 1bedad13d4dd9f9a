"""Security and potential typing.

Every command rule only bounds the potential from below, so typing a
command reduces to computing its structural demand: ``pc, q |- c`` holds
exactly when the structural checks pass and ``q >= demand(pc, c)``. A single
traversal (``_demand``) therefore serves both inference and checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .lattice import Lattice, LatticeError
from .syntax import (Assign, BaseType, BinOp, If, Input, IntLit, LabeledType,
                     Oblif, OblivAssign, Output, Pop, Program, Send, Seq, Skip,
                     Stop, StrLit, Var, While)
from .values import op_signature


class ErrorKind(str, Enum):
    FLOW_VIOLATION = "flow violation"
    PUBLIC_GUARD = "public-guard violation"
    POTENTIAL_DEFICIT = "potential deficit"
    ASSIGN_UNDER_SECRET_PC = "non-oblivious assign under secret pc"
    WHILE_UNDER_SECRET_PC = "while under secret pc"
    SORT_MISMATCH = "sort mismatch"
    UNKNOWN_IDENTIFIER = "unknown identifier"


class TypeCheckError(Exception):
    def __init__(self, kind: ErrorKind, pos, detail: str, handler: Optional[str] = None):
        self.kind = kind
        self.pos = pos
        self.detail = detail
        self.handler = handler
        super().__init__(self.render())

    def render(self, filename: Optional[str] = None) -> str:
        line, col = self.pos or (0, 0)
        where = f"{filename}:" if filename else ""
        ctx = f" (in handler {self.handler})" if self.handler else ""
        return f"{where}{line}:{col}: {self.kind.value}: {self.detail}{ctx}"


@dataclass(frozen=True)
class ChannelType:
    base: BaseType
    mode: str
    val: str
    potential: int

    def __str__(self):
        return f"{self.base.value}@({self.mode},{self.val},{self.potential})"


@dataclass(frozen=True)
class TypeEnvs:
    gamma: dict
    pi: dict
    lam: dict
    lattice: Lattice
    delta: dict = field(default_factory=dict)

    def with_param(self, name: str, ty: LabeledType) -> "TypeEnvs":
        return replace(self, delta={name: ty})


def system_lattice(programs) -> Lattice:
    """The lattice shared by every program; mixing lattices is an error."""
    lats = {p.lattice for p in programs}
    if len(lats) > 1:
        raise LatticeError("programs declare different security lattices")
    return lats.pop() if lats else Lattice.two_point()


def build_lambda(programs) -> dict:
    """Network channel environment assembled from every node's handlers."""
    lam = {}
    for p in programs:
        for h in p.handlers:
            lam[f"{p.node}/{h.name}"] = ChannelType(h.param_type.base, h.mode,
                                                     h.param_type.level, h.potential)
    return lam


def envs_for(p: Program, lam: Optional[dict] = None, lattice: Optional[Lattice] = None) -> TypeEnvs:
    if lam is None:
        lam = build_lambda([p])
    return TypeEnvs(
        gamma={v.name: v.type for v in p.globals},
        pi={lc.name: lc.type for lc in p.locals},
        lam=dict(lam),
        lattice=lattice or p.lattice,
    )


# -- expressions -------------------------------------------------------------

def type_expr(envs: TypeEnvs, e) -> tuple[BaseType, str]:
    lat = envs.lattice
    match e:
        case IntLit():
            return BaseType.INT, lat.bottom
        case StrLit():
            return BaseType.STRING, lat.bottom
        case Var(x):
            ty = envs.delta.get(x) or envs.gamma.get(x)
            if ty is None:
                raise TypeCheckError(ErrorKind.UNKNOWN_IDENTIFIER, e.pos, f"unknown variable '{x}'")
            return ty.base, ty.level
        case BinOp(op, a, b):
            s1, l1 = type_expr(envs, a)
            s2, l2 = type_expr(envs, b)
            res = op_signature(op, s1 is BaseType.INT, s2 is BaseType.INT)
            if res is None:
                raise TypeCheckError(ErrorKind.SORT_MISMATCH, e.pos,
                                     f"operator '{op}' is not defined on {s1} and {s2}")
            return (BaseType.INT if res else BaseType.STRING), lat.lub(l1, l2)
    raise TypeError(f"not an expression: {e!r}")


# -- commands ----------------------------------------------------------------

def _err(kind, c, detail):
    return TypeCheckError(kind, getattr(c, "pos", None), detail)


def _flows(envs, lo, hi, c, what):
    if not envs.lattice.leq(lo, hi):
        raise _err(ErrorKind.FLOW_VIOLATION, c, f"{what}: {lo} does not flow to {hi}")


def _global(envs, x, c) -> LabeledType:
    if x in envs.delta:
        raise _err(ErrorKind.UNKNOWN_IDENTIFIER, c,
                   f"'{x}' is the handler parameter and cannot be assigned")
    ty = envs.gamma.get(x)
    if ty is None:
        raise _err(ErrorKind.UNKNOWN_IDENTIFIER, c, f"unknown variable '{x}'")
    return ty


def _same_sort(expected, got, c, what):
    if expected != got:
        raise _err(ErrorKind.SORT_MISMATCH, c, f"{what}: expected {expected}, got {got}")


def _int_guard(envs, e, c) -> str:
    s, lv = type_expr(envs, e)
    _same_sort(BaseType.INT, s, c, "guard")
    return lv


def _demand(envs: TypeEnvs, pc: str, c) -> int:
    """Least potential that types ``c`` under ``pc``; raises on structural errors."""
    lat = envs.lattice
    match c:
        case Skip() | Stop() | Pop():
            return 0
        case Seq(a, b):
            return _demand(envs, pc, a) + _demand(envs, pc, b)
        case Assign(x, e):
            if not lat.is_bottom(pc):
                raise _err(ErrorKind.ASSIGN_UNDER_SECRET_PC, c,
                           f"'{x} = ...' under pc {pc}; use '?=' instead")
            tx = _global(envs, x, c)
            s, le = type_expr(envs, e)
            _same_sort(tx.base, s, c, f"assignment to '{x}'")
            _flows(envs, le, tx.level, c, f"assignment to '{x}'")
            return 0
        case OblivAssign(x, e):
            tx = _global(envs, x, c)
            s, le = type_expr(envs, e)
            _same_sort(tx.base, s, c, f"assignment to '{x}'")
            _flows(envs, lat.lub(le, pc), tx.level, c, f"assignment to '{x}'")
            return 0
        case Input(x, ch, e):
            tx = _global(envs, x, c)
            tch = envs.pi.get(ch)
            if tch is None:
                raise _err(ErrorKind.UNKNOWN_IDENTIFIER, c, f"unknown local channel '{ch}'")
            s, le = type_expr(envs, e)
            _same_sort(BaseType.INT, s, c, "input size bound")
            _same_sort(tx.base, tch.base, c, f"input from '{ch}' into '{x}'")
            _flows(envs, lat.lub(le, pc), tch.level, c, f"input from '{ch}'")
            _flows(envs, tch.level, tx.level, c, f"input from '{ch}' into '{x}'")
            return 0
        case Send(target, e):
            ct = envs.lam.get(target)
            if ct is None:
                raise _err(ErrorKind.UNKNOWN_IDENTIFIER, c, f"unknown network channel '{target}'")
            s, le = type_expr(envs, e)
            _same_sort(ct.base, s, c, f"send on '{target}'")
            _flows(envs, pc, ct.mode, c, f"pc of send on '{target}'")
            _flows(envs, le, ct.val, c, f"value sent on '{target}'")
            return 0 if lat.is_bottom(pc) else 1 + ct.potential
        case Output(ch, e):
            tch = envs.pi.get(ch)
            if tch is None:
                raise _err(ErrorKind.UNKNOWN_IDENTIFIER, c, f"unknown local channel '{ch}'")
            s, le = type_expr(envs, e)
            _same_sort(tch.base, s, c, f"output on '{ch}'")
            _flows(envs, lat.lub(le, pc), tch.level, c, f"output on '{ch}'")
            return 0
        case If(e, a, b):
            lv = _int_guard(envs, e, c)
            if not lat.is_bottom(lv):
                raise _err(ErrorKind.PUBLIC_GUARD, c,
                           f"'if' guard has level {lv}; use 'oblif' for secret guards")
            return max(_demand(envs, pc, a), _demand(envs, pc, b))
        case While(e, body):
            lv = _int_guard(envs, e, c)
            if not lat.is_bottom(lv):
                raise _err(ErrorKind.PUBLIC_GUARD, c, f"'while' guard has level {lv}")
            if not lat.is_bottom(pc):
                raise _err(ErrorKind.WHILE_UNDER_SECRET_PC, c, f"'while' under pc {pc}")
            d = _demand(envs, pc, body)
            if d != 0:
                raise _err(ErrorKind.POTENTIAL_DEFICIT, c,
                           f"loop body needs potential {d} but loops must need none")
            return 0
        case Oblif(e, a, b):
            lv = _int_guard(envs, e, c)
            if lat.is_bottom(lv):
                raise _err(ErrorKind.PUBLIC_GUARD, c,
                           f"'oblif' guard has level {lv}; use 'if' for public guards")
            inner = lat.lub(pc, lv)
            return _demand(envs, inner, a) + _demand(envs, inner, b)
    raise TypeError(f"not a command: {c!r}")


def infer_min_potential(envs: TypeEnvs, pc: str, c) -> Optional[int]:
    """Least ``q`` with ``pc, q |- c``, or None when no potential suffices."""
    try:
        return _demand(envs, pc, c)
    except TypeCheckError:
        return None


def check_command(envs: TypeEnvs, pc: str, q: int, c) -> None:
    """Raise ``TypeCheckError`` unless ``c`` types under ``pc`` with potential ``q``."""
    d = _demand(envs, pc, c)
    if q < d:
        raise _err(ErrorKind.POTENTIAL_DEFICIT, c, f"needs potential {d}, has {q}")


def check_program(p: Program, envs: Optional[TypeEnvs] = None) -> list[TypeCheckError]:
    """All type errors in ``p``; an empty list means the program is well typed."""
    envs = envs or envs_for(p)
    errors = []
    for v in p.globals:
        if v.init is None:
            continue
        is_int = isinstance(v.init, int)
        if is_int != (v.type.base is BaseType.INT):
            errors.append(TypeCheckError(ErrorKind.SORT_MISMATCH, v.pos,
                                         f"initializer of '{v.name}' is not {v.type.base}"))
    for h in p.handlers:
        key = f"{p.node}/{h.name}"
        ct = envs.lam.get(key)
        q = ct.potential if ct is not None else h.potential
        henvs = envs.with_param(h.param, h.param_type)
        try:
            d = _demand(henvs, h.mode, h.body)
            if q < d:
                raise TypeCheckError(ErrorKind.POTENTIAL_DEFICIT, h.pos,
                                     f"handler needs potential {d} but is annotated ${q}")
        except TypeCheckError as exc:
            exc.handler = h.name
            exc.args = (exc.render(),)
            errors.append(exc)
    return errors


def handler_minimums(p: Program, envs: Optional[TypeEnvs] = None) -> dict:
    """Inferred minimal potential (or None) per handler of ``p``."""
    envs = envs or envs_for(p)
    return {h.name: infer_min_potential(envs.with_param(h.param, h.param_type), h.mode, h.body)
            for h in p.handlers}


def check_system(programs) -> list[TypeCheckError]:
    """Type every program against the channel environment of the whole system."""
    lat = system_lattice(programs)
    lam = build_lambda(programs)
    errors = []
    for p in programs:
        errors += check_program(p, envs_for(p, lam, lat))
    return errors
