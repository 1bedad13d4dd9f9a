"""Lexer, parser and pretty-printer for ``.oblivio`` sources, plus the
strategy-script reader.

Concrete syntax, by example::

    ALICE                        // node id
    lattice L < H;               // optional; two-point L < H by default
    local channel STDIN : string@H;
    var max_bid : int@H = 300;
    var name : string@H = "" pad 8;

    TO_LEAD@H $1 (bid : int@H) {
        oblif bid <= max_bid
        then send(AUCTIONHOUSE/ALICE_BID, bid);
        else skip;
    }
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .lattice import Lattice, LatticeError
from .syntax import (Assign, BaseType, BinOp, Handler, If, Input, IntLit,
                     LabeledType, LocalChannelDecl, Oblif, OblivAssign, Output,
                     Program, Send, Seq, Skip, StrLit, Var, VarDecl, While, seq)
from .values import INT_MAX, INT_MIN, PaddingError, SizedValue, size_of


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


# -- lexer -------------------------------------------------------------------

KEYWORDS = {
    "var", "local", "channel", "lattice", "if", "then", "else", "oblif",
    "while", "do", "skip", "send", "output", "input", "int", "string", "pad",
}
# internal command forms; never accepted in source
RESERVED = {"pop", "stop"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<str>")
  | (?P<op>\?=|==|!=|<=|>=|&&|\|\||[=<>+\-*^(){};:,@$/])
""", re.VERBOSE)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


@dataclass(frozen=True)
class Token:
    kind: str  # ident | kw | int | str | op | eof
    text: str
    value: object
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    toks = []
    i, line, line_start = 0, 1, 0
    n = len(source)
    while i < n:
        m = _TOKEN_RE.match(source, i)
        col = i - line_start + 1
        if not m:
            raise ParseError(f"unexpected character {source[i]!r}", line, col)
        kind = m.lastgroup
        text = m.group(kind)
        if kind == "nl":
            line += 1
            line_start = m.end()
            i = m.end()
            continue
        if kind in ("ws", "comment"):
            i = m.end()
            continue
        if kind == "str":
            j = m.end()
            chars = []
            while True:
                if j >= n or source[j] == "\n":
                    raise ParseError("unterminated string literal", line, col)
                ch = source[j]
                if ch == '"':
                    j += 1
                    break
                if ch == "\\":
                    if j + 1 >= n or source[j + 1] not in _ESCAPES:
                        raise ParseError("bad escape in string literal", line, j - line_start + 1)
                    chars.append(_ESCAPES[source[j + 1]])
                    j += 2
                    continue
                chars.append(ch)
                j += 1
            toks.append(Token("str", source[i:j], "".join(chars), line, col))
            i = j
            continue
        if kind == "ident":
            if text in RESERVED:
                raise ParseError(f"'{text}' is an internal command and cannot appear in source",
                                 line, col)
            toks.append(Token("kw" if text in KEYWORDS else "ident", text, text, line, col))
        elif kind == "int":
            toks.append(Token("int", text, int(text), line, col))
        else:
            toks.append(Token("op", "=" if text == "==" else text, text, line, col))
        i = m.end()
    toks.append(Token("eof", "", None, line, i - line_start + 1))
    return toks


# -- parser ------------------------------------------------------------------

_PREC = [
    ("||",),
    ("&&",),
    ("=", "!=", "<", "<=", ">", ">="),
    ("+", "-", "^"),
    ("*",),
]


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text, kind=None) -> bool:
        t = self.tok
        return t.text == text and t.kind in ((kind,) if kind else ("op", "kw"))

    def accept(self, text, kind=None) -> Optional[Token]:
        if self.at(text, kind):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text, kind=None) -> Token:
        t = self.accept(text, kind)
        if t is None:
            found = self.tok.text or "end of input"
            raise self.error(f"expected '{text}', found '{found}'")
        return t

    def ident(self, what="identifier") -> Token:
        t = self.tok
        if t.kind != "ident":
            found = t.text or "end of input"
            raise self.error(f"expected {what}, found '{found}'")
        self.i += 1
        return t

    def natural(self, what="number") -> int:
        t = self.tok
        if t.kind != "int":
            raise self.error(f"expected {what}")
        self.i += 1
        return t.value

    # program
    def program(self) -> Program:
        node = self.ident("node id")
        lattice_pairs = None
        locals_, globals_, handlers = [], [], []
        label_uses = []
        names = {"local": set(), "var": set(), "handler": set()}
        while self.tok.kind != "eof":
            t = self.tok
            if self.accept("lattice"):
                if lattice_pairs is not None:
                    raise self.error("lattice declared twice", t)
                lattice_pairs = self.lattice_pairs()
            elif self.accept("local"):
                self.expect("channel")
                name = self.ident("channel name")
                self.expect(":")
                ty = self.labeled_type(label_uses)
                self.accept(";")
                self._unique(names["local"], name, "local channel")
                locals_.append(LocalChannelDecl(name.text, ty, pos=(t.line, t.col)))
            elif self.accept("var"):
                globals_.append(self.var_decl(t, label_uses, names["var"]))
            elif t.kind == "ident":
                handlers.append(self.handler(label_uses, names["handler"]))
            else:
                raise self.error(f"unexpected '{t.text}' at top level")
        try:
            lat = Lattice.two_point() if lattice_pairs is None else Lattice.from_pairs(lattice_pairs)
        except LatticeError as exc:
            raise ParseError(f"bad lattice: {exc}", node.line, node.col) from None
        for level, tok in label_uses:
            if level not in lat:
                raise ParseError(f"unknown security label '{level}'", tok.line, tok.col)
        return Program(node.text, lattice_pairs, tuple(locals_), tuple(globals_), tuple(handlers))

    def _unique(self, seen, tok, what):
        if tok.text in seen:
            raise self.error(f"duplicate {what} '{tok.text}'", tok)
        seen.add(tok.text)

    def lattice_pairs(self):
        pairs = []
        while True:
            lo = self.ident("level")
            self.expect("<")
            hi = self.ident("level")
            pairs.append((lo.text, hi.text))
            if not self.accept(","):
                break
        self.expect(";")
        return tuple(pairs)

    def labeled_type(self, label_uses) -> LabeledType:
        if self.accept("int"):
            base = BaseType.INT
        elif self.accept("string"):
            base = BaseType.STRING
        else:
            raise self.error("expected 'int' or 'string'")
        self.expect("@")
        lv = self.ident("security label")
        label_uses.append((lv.text, lv))
        return LabeledType(base, lv.text)

    def var_decl(self, start, label_uses, seen) -> VarDecl:
        name = self.ident("variable name")
        self.expect(":")
        ty = self.labeled_type(label_uses)
        init = pad = None
        if self.accept("="):
            lit = self.tok
            init = self.literal()
            if (ty.base is BaseType.INT) != isinstance(init, int):
                raise self.error(f"initializer does not match type {ty}", lit)
            if self.accept("pad"):
                ptok = self.tok
                pad = self.natural("pad size")
                if pad < size_of(init):
                    raise self.error(f"pad {pad} smaller than the initializer's size", ptok)
        self.expect(";")
        self._unique(seen, name, "variable")
        return VarDecl(name.text, ty, init, pad, pos=(start.line, start.col))

    def literal(self):
        t = self.tok
        if t.kind == "str":
            self.i += 1
            return t.value
        neg = self.accept("-") is not None
        n = self.natural("literal")
        n = -n if neg else n
        if not INT_MIN <= n <= INT_MAX:
            raise self.error("integer literal out of 64-bit range", t)
        return n

    def handler(self, label_uses, seen) -> Handler:
        name = self.ident("handler name")
        self.expect("@")
        mode = self.ident("mode label")
        label_uses.append((mode.text, mode))
        q = 0
        if self.accept("$"):
            q = self.natural("potential")
        self.expect("(")
        param = self.ident("parameter name")
        self.expect(":")
        pty = self.labeled_type(label_uses)
        self.expect(")")
        self.expect("{")
        body = self.stmts_until("}")
        self.expect("}")
        self._unique(seen, name, "handler")
        return Handler(name.text, mode.text, q, param.text, pty, body, pos=(name.line, name.col))

    # statements
    def stmts_until(self, closer):
        items = []
        while not self.at(closer) and self.tok.kind != "eof":
            items.append(self.stmt())
        return seq(*items)

    def stmt(self):
        t = self.tok
        pos = (t.line, t.col)
        if self.accept("{"):
            body = self.stmts_until("}")
            self.expect("}")
            return body
        if self.accept("if") or self.accept("oblif"):
            cond = self.expr()
            self.expect("then")
            c1 = self.stmt()
            self.expect("else")
            c2 = self.stmt()
            return (If if t.text == "if" else Oblif)(cond, c1, c2, pos=pos)
        if self.accept("while"):
            cond = self.expr()
            self.expect("do")
            return While(cond, self.stmt(), pos=pos)
        c = self.simple()
        self.expect(";")
        return c

    def simple(self):
        t = self.tok
        pos = (t.line, t.col)
        if self.accept("skip"):
            return Skip(pos=pos)
        if self.accept("send"):
            self.expect("(")
            node = self.ident("node id")
            self.expect("/")
            ch = self.ident("channel name")
            self.expect(",")
            e = self.expr()
            self.expect(")")
            return Send(f"{node.text}/{ch.text}", e, pos=pos)
        if self.accept("output"):
            self.expect("(")
            ch = self.ident("local channel")
            self.expect(",")
            e = self.expr()
            self.expect(")")
            return Output(ch.text, e, pos=pos)
        if t.kind == "ident":
            self.i += 1
            if self.accept("="):
                return Assign(t.text, self.expr(), pos=pos)
            if self.accept("?="):
                if self.accept("input"):
                    self.expect("(")
                    ch = self.ident("local channel")
                    self.expect(",")
                    e = self.expr()
                    self.expect(")")
                    return Input(t.text, ch.text, e, pos=pos)
                return OblivAssign(t.text, self.expr(), pos=pos)
            raise self.error(f"expected '=' or '?=' after '{t.text}'")
        raise self.error(f"expected a statement, found '{t.text or 'end of input'}'")

    # expressions
    def expr(self, level=0):
        if level == len(_PREC):
            return self.primary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in _PREC[level]:
            op = self.tok
            self.i += 1
            right = self.expr(level + 1)
            left = BinOp(op.text, left, right, pos=(op.line, op.col))
        return left

    def primary(self):
        t = self.tok
        pos = (t.line, t.col)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "str":
            self.i += 1
            return StrLit(t.value, pos=pos)
        if t.kind == "int" or self.at("-"):
            return IntLit(self.literal(), pos=pos)
        if t.kind == "ident":
            self.i += 1
            return Var(t.text, pos=pos)
        raise self.error(f"expected an expression, found '{t.text or 'end of input'}'")


def parse_program(source: str) -> Program:
    """Parse program text, raising ``ParseError`` with a line and column."""
    p = _Parser(source)
    try:
        return p.program()
    except RecursionError:
        raise p.error("nesting too deep") from None


def parse_expr(source: str):
    p = _Parser(source)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error("trailing input after expression")
    return e


# -- pretty-printer ----------------------------------------------------------

def _quote(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def pretty_expr(e) -> str:
    match e:
        case IntLit(n):
            return str(n)
        case StrLit(s):
            return _quote(s)
        case Var(x):
            return x
        case BinOp(op, a, b):
            return f"({pretty_expr(a)} {op} {pretty_expr(b)})"
    raise TypeError(f"not an expression: {e!r}")


def _seq_items(c):
    items = []
    while isinstance(c, Seq):
        items.append(c.first)
        c = c.second
    items.append(c)
    return items


def pretty_command(c, indent=1) -> str:
    pad = "    " * indent
    match c:
        case Seq():
            inner = "\n".join(pretty_command(x, indent + 1) for x in _seq_items(c))
            return f"{pad}{{\n{inner}\n{pad}}}"
        case Skip():
            return f"{pad}skip;"
        case Assign(x, e):
            return f"{pad}{x} = {pretty_expr(e)};"
        case OblivAssign(x, e):
            return f"{pad}{x} ?= {pretty_expr(e)};"
        case Input(x, ch, e):
            return f"{pad}{x} ?= input({ch}, {pretty_expr(e)});"
        case Send(target, e):
            return f"{pad}send({target}, {pretty_expr(e)});"
        case Output(ch, e):
            return f"{pad}output({ch}, {pretty_expr(e)});"
        case If(e, a, b) | Oblif(e, a, b):
            kw = "if" if isinstance(c, If) else "oblif"
            return (f"{pad}{kw} {pretty_expr(e)}\n{pad}then\n{pretty_command(a, indent + 1)}\n"
                    f"{pad}else\n{pretty_command(b, indent + 1)}")
        case While(e, body):
            return f"{pad}while {pretty_expr(e)} do\n{pretty_command(body, indent + 1)}"
    raise TypeError(f"cannot print {c!r}")


def pretty_print(p: Program) -> str:
    lines = [p.node]
    if p.lattice_decl is not None:
        lines.append("lattice " + ", ".join(f"{a} < {b}" for a, b in p.lattice_decl) + ";")
    for lc in p.locals:
        lines.append(f"local channel {lc.name} : {lc.type};")
    for v in p.globals:
        line = f"var {v.name} : {v.type}"
        if v.init is not None:
            line += " = " + (_quote(v.init) if isinstance(v.init, str) else str(v.init))
            if v.pad is not None:
                line += f" pad {v.pad}"
        lines.append(line + ";")
    for h in p.handlers:
        lines.append("")
        lines.append(f"{h.name}@{h.mode} ${h.potential} ({h.param} : {h.param_type}) {{")
        lines.extend(pretty_command(x, 1) for x in _seq_items(h.body))
        lines.append("}")
    return "\n".join(lines) + "\n"


# -- strategy scripts --------------------------------------------------------

class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class NetMessage:
    channel: str  # "NODE/CH", or a bare "CH" resolved against the recipient
    bit: int
    value: SizedValue
    after: int = 0  # available once the recipient's trace has this many events


@dataclass(frozen=True)
class StrategyScript:
    net: tuple = ()
    local: dict = field(default_factory=dict)  # ch -> tuple[SizedValue | None]

    def resolved(self, node: str) -> "StrategyScript":
        """Qualify bare channel names with ``node``."""
        net = tuple(m if "/" in m.channel else
                    NetMessage(f"{node}/{m.channel}", m.bit, m.value, m.after)
                    for m in self.net)
        return StrategyScript(net, dict(self.local))

    def to_json(self) -> dict:
        def enc(v):
            return None if v is None else {"val": v.base, "size": v.size}
        net = []
        for m in self.net:
            rec = {"ch": m.channel, "bit": m.bit, "val": m.value.base, "size": m.value.size}
            if m.after:
                rec["after"] = m.after
            net.append(rec)
        return {"net": net, "local": {k: [enc(v) for v in vs] for k, vs in self.local.items()}}


EMPTY_STRATEGY = StrategyScript()


def _sized(rec, where) -> SizedValue:
    if not isinstance(rec, dict) or "val" not in rec:
        raise StrategyError(f"{where}: record needs a 'val' field")
    v = rec["val"]
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise StrategyError(f"{where}: value must be an int or a string")
    if isinstance(v, int) and not INT_MIN <= v <= INT_MAX:
        raise StrategyError(f"{where}: integer out of 64-bit range")
    z = rec.get("size", size_of(v))
    if isinstance(z, bool) or not isinstance(z, int):
        raise StrategyError(f"{where}: size must be an integer")
    try:
        return SizedValue(v, z)
    except PaddingError:
        raise StrategyError(f"{where}: size {z} is below size_of({v!r}) = {size_of(v)}") from None


def strategy_from_obj(obj) -> StrategyScript:
    if not isinstance(obj, dict):
        raise StrategyError("strategy must be a JSON object")
    unknown = set(obj) - {"net", "local"}
    if unknown:
        raise StrategyError(f"unknown strategy fields: {sorted(unknown)}")
    net = []
    for k, rec in enumerate(obj.get("net", [])):
        where = f"net[{k}]"
        if not isinstance(rec, dict):
            raise StrategyError(f"{where}: expected an object")
        ch = rec.get("ch")
        if not isinstance(ch, str) or not re.fullmatch(r"([A-Za-z_]\w*/)?[A-Za-z_]\w*", ch):
            raise StrategyError(f"{where}: bad channel {ch!r}")
        bit = rec.get("bit", 1)
        if bit not in (0, 1) or isinstance(bit, bool):
            raise StrategyError(f"{where}: mode bit must be 0 or 1, got {bit!r}")
        after = rec.get("after", 0)
        if isinstance(after, bool) or not isinstance(after, int) or after < 0:
            raise StrategyError(f"{where}: 'after' must be a natural number")
        net.append(NetMessage(ch, bit, _sized(rec, where), after))
    local = {}
    raw_local = obj.get("local", {})
    if not isinstance(raw_local, dict):
        raise StrategyError("'local' must be an object")
    for ch, stream in raw_local.items():
        if not isinstance(stream, list):
            raise StrategyError(f"local[{ch}]: expected a list")
        local[ch] = tuple(None if r is None else _sized(r, f"local[{ch}][{k}]")
                          for k, r in enumerate(stream))
    return StrategyScript(tuple(net), local)


def parse_strategy(source: str) -> StrategyScript:
    try:
        obj = json.loads(source)
    except json.JSONDecodeError as exc:
        raise StrategyError(f"malformed strategy: {exc}") from None
    return strategy_from_obj(obj)
