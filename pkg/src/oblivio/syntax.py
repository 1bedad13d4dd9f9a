"""Abstract syntax for OblivIO programs.

Nodes are frozen dataclasses. Source positions ride along on every node but
are excluded from equality, so two parses of equivalent text compare equal
regardless of layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

Pos = Optional[tuple]  # (line, col), 1-based


class BaseType(str, Enum):
    INT = "int"
    STRING = "string"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class LabeledType:
    base: BaseType
    level: str

    def __str__(self):
        return f"{self.base.value}@{self.level}"


# -- expressions -------------------------------------------------------------

BINOPS = ("+", "-", "*", "=", "!=", "<", "<=", ">", ">=", "&&", "||", "^")


@dataclass(frozen=True)
class IntLit:
    value: int
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class StrLit:
    value: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


Expr = Union[IntLit, StrLit, Var, BinOp]


# -- commands ----------------------------------------------------------------

@dataclass(frozen=True)
class Skip:
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Seq:
    first: "Command"
    second: "Command"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class OblivAssign:
    var: str
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Input:
    """``x ?= input(ch, e)``: non-blocking read of local channel ``ch``."""
    var: str
    channel: str
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Send:
    target: str  # "NODE/CHANNEL"
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Output:
    channel: str
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Command"
    orelse: "Command"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: "Command"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Oblif:
    cond: Expr
    then: "Command"
    orelse: "Command"
    pos: Pos = field(default=None, compare=False, repr=False)


# runtime-only forms; the parser never produces these
@dataclass(frozen=True)
class Stop:
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Pop:
    pos: Pos = field(default=None, compare=False, repr=False)


Command = Union[Skip, Seq, Assign, OblivAssign, Input, Send, Output, If, While,
                Oblif, Stop, Pop]

SURFACE_COMMANDS = (Skip, Seq, Assign, OblivAssign, Input, Send, Output, If,
                    While, Oblif)

STOP = Stop()
POP = Pop()


def seq(*cmds: Command) -> Command:
    """Right-nested sequence of ``cmds``; ``skip`` when empty."""
    if not cmds:
        return Skip()
    out = cmds[-1]
    for c in reversed(cmds[:-1]):
        out = Seq(c, out, pos=c.pos)
    return out


def subcommands(c: Command):
    match c:
        case Seq(a, b) | If(_, a, b) | Oblif(_, a, b):
            return (a, b)
        case While(_, body):
            return (body,)
        case _:
            return ()


def walk(c: Command):
    """Pre-order iteration over every command node in ``c``."""
    stack = [c]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(subcommands(node)))


def walk_expr(e: Expr):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, BinOp):
            stack.append(node.right)
            stack.append(node.left)


def command_exprs(c: Command):
    match c:
        case Assign(_, e) | OblivAssign(_, e) | Input(_, _, e) | Send(_, e) | Output(_, e):
            return (e,)
        case If(e, _, _) | While(e, _) | Oblif(e, _, _):
            return (e,)
        case _:
            return ()


# -- declarations ------------------------------------------------------------

@dataclass(frozen=True)
class LocalChannelDecl:
    name: str
    type: LabeledType
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class VarDecl:
    name: str
    type: LabeledType
    init: Optional[Union[int, str]] = None
    pad: Optional[int] = None
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Handler:
    name: str
    mode: str
    potential: int
    param: str
    param_type: LabeledType
    body: Command
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    node: str
    lattice_decl: Optional[tuple] = None  # ((lo, hi), ...) as written
    locals: tuple = ()
    globals: tuple = ()
    handlers: tuple = ()

    @property
    def lattice(self):
        from .lattice import Lattice
        if self.lattice_decl is None:
            return Lattice.two_point()
        return Lattice.from_pairs(self.lattice_decl)

    def handler(self, name: str) -> Optional[Handler]:
        for h in self.handlers:
            if h.name == name:
                return h
        return None

    def var(self, name: str) -> Optional[VarDecl]:
        for v in self.globals:
            if v.name == name:
                return v
        return None
