import json

import pytest
from hypothesis import given, strategies as st

from oblivio.corpus import corpus_files, corpus_text
from oblivio.frontend import (ParseError, StrategyError, parse_expr, parse_program,
                              parse_strategy, pretty_expr, pretty_print)
from oblivio.syntax import (SURFACE_COMMANDS, BaseType, BinOp, IntLit, LabeledType, Pop,
                            Stop, Var, walk)

from strategies import exprs, programs

ALICE = "ALICE\nvar max_bid : int@H;\nTO_LEAD@H $1 (bid: int@H) { skip; }"


def test_parse_bidder_header():
    p = parse_program(ALICE)
    assert p.node == "ALICE"
    assert len(p.globals) == 1 and p.globals[0].type == LabeledType(BaseType.INT, "H")
    assert len(p.handlers) == 1
    h = p.handlers[0]
    assert (h.name, h.mode, h.potential, h.param) == ("TO_LEAD", "H", 1, "bid")


def test_potential_defaults_to_zero():
    p = parse_program("N\nH@L (x: int@L) { skip; }")
    assert p.handlers[0].potential == 0


def test_pop_is_not_surface_syntax():
    with pytest.raises(ParseError) as exc:
        parse_program("N\nH@L (x: int@L) { x pop; }")
    assert (exc.value.line, exc.value.col) == (2, 20)


@pytest.mark.parametrize("src", [
    "N\nH@L (x: int@L) { pop; }",
    "N\nH@L (x: int@L) { stop; }",
])
def test_internal_commands_rejected(src):
    with pytest.raises(ParseError, match="internal"):
        parse_program(src)


@pytest.mark.parametrize("src, msg", [
    ("N\nH@L (x: int@L) { skip; }\nH@L (y: int@L) { skip; }", "duplicate"),
    ("N\nvar a : int@L;\nvar a : int@H;", "duplicate"),
    ("N\nlocal channel C : int@L;\nlocal channel C : int@L;", "duplicate"),
    ("N\nvar a : int@Q;", "unknown security label 'Q'"),
    ("N\nlattice L < H, H < L;", "cycle"),
    ("N\nH@L (x: int@L) { skip }", "expected ';'"),
    ("N\nH@L (x: int@L) { x = 99999999999999999999; }", "64-bit"),
])
def test_parse_errors(src, msg):
    with pytest.raises(ParseError, match=msg):
        parse_program(src)


def test_declared_lattice():
    p = parse_program("N\nlattice L < M, M < H;\nvar a : int@M;\nC@M (x: int@H) { skip; }")
    lat = p.lattice
    assert lat.leq("L", "H") and lat.bottom == "L"


def test_double_equals_is_equality():
    assert parse_expr("a == 1") == parse_expr("a = 1")


def test_precedence():
    assert parse_expr("1 + 2 * 3") == BinOp("+", IntLit(1), BinOp("*", IntLit(2), IntLit(3)))
    assert parse_expr("a < 1 && b") == BinOp("&&", BinOp("<", Var("a"), IntLit(1)), Var("b"))


@pytest.mark.parametrize("name", corpus_files())
def test_corpus_round_trip(name):
    p = parse_program(corpus_text(name))
    text = pretty_print(p)
    assert parse_program(text) == p
    assert pretty_print(parse_program(text)) == text


@given(programs())
def test_round_trip(p):
    assert parse_program(pretty_print(p)) == p


@given(exprs)
def test_expr_round_trip(e):
    assert parse_expr(pretty_expr(e)) == e


@given(st.text(max_size=60))
def test_parsing_is_total(src):
    try:
        p = parse_program(src)
    except ParseError as exc:
        assert exc.line >= 0 and exc.col >= 0
        return
    for h in p.handlers:
        for c in walk(h.body):
            assert isinstance(c, SURFACE_COMMANDS) and not isinstance(c, (Stop, Pop))


@given(st.lists(st.sampled_from([
    "N", "\n", "var", "x", ":", "int", "string", "@L", "@H", ";", "=", "1", '"s"', "{", "}",
    "(", ")", "H@L", "oblif", "if", "then", "else", "while", "do", "skip", "send", "B/C",
    "?=", "input", "output", "pop", ",", "$", "2", "^", "+",
]), max_size=30))
def test_parsing_is_total_on_token_soup(toks):
    try:
        parse_program(" ".join(toks))
    except ParseError:
        pass


# -- strategies --------------------------------------------------------------

def test_strategy_genuine():
    s = parse_strategy('{"net":[{"ch":"ALICE/TO_LEAD","bit":1,"val":100,"size":8}],"local":{}}')
    assert len(s.net) == 1
    m = s.net[0]
    assert (m.channel, m.bit, m.value.base, m.value.size) == ("ALICE/TO_LEAD", 1, 100, 8)


def test_strategy_dummy():
    s = parse_strategy('{"net":[{"ch":"ALICE/TO_LEAD","bit":0,"val":0,"size":8}],"local":{}}')
    assert s.net[0].bit == 0


@pytest.mark.parametrize("src, msg", [
    ('{"net":[{"ch":"A/B","bit":1,"val":"abcd","size":2}]}', "below size_of"),
    ('{"net":[{"ch":"A/B","bit":2,"val":1}]}', "mode bit"),
    ('{"net":[{"ch":"A/B","val":true}]}', "int or a string"),
    ('{"net":[{"ch":"A//B","val":1}]}', "bad channel"),
    ('{"net":[{"ch":"A/B","val":1,"after":-1}]}', "after"),
    ('{"net":[{"ch":"A/B"}]}', "val"),
    ('{"nets":[]}', "unknown strategy fields"),
    ('{"local":{"STDIN":[{"val":"abc","size":1}]}}', "below size_of"),
    ("[1, 2", "malformed"),
])
def test_strategy_errors(src, msg):
    with pytest.raises(StrategyError, match=msg):
        parse_strategy(src)


def test_strategy_defaults_and_local_streams():
    s = parse_strategy('{"net":[{"ch":"T","val":"hé"}],'
                       '"local":{"STDIN":[null,{"val":"hi","size":4}]}}')
    m = s.net[0]
    assert m.bit == 1 and m.value.size == 3 and m.after == 0
    assert s.local["STDIN"][0] is None and s.local["STDIN"][1].size == 4
    assert s.resolved("BOB").net[0].channel == "BOB/T"


def test_strategy_json_round_trip():
    src = ('{"net":[{"ch":"A/B","bit":0,"val":3,"size":8,"after":2}],'
           '"local":{"IN":[null,{"val":"x","size":5}]}}')
    s = parse_strategy(src)
    assert parse_strategy(json.dumps(s.to_json())) == s
