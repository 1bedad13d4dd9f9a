import pytest
from hypothesis import given, strategies as st

from oblivio.syntax import BINOPS
from oblivio.values import (INT_MAX, INT_MIN, CtCounters, PaddingError, SizedValue, SortError,
                            apply_binop, op_signature, pad, safe_concat, safe_eq, safe_select,
                            size_of, wrap64)

from strategies import sized_values

S = SizedValue


def test_size_of():
    assert size_of(42) == 8
    assert size_of("") == 0
    assert size_of("abc") == 3
    assert size_of("é") == 2


def test_sized_value_rejects_underpadding():
    with pytest.raises(PaddingError):
        S("abcd", 2)


def test_pad():
    assert pad(S("ab", 2), 5) == S("ab", 5)
    assert pad(S(7, 8), 8) == S(7, 8)
    with pytest.raises(PaddingError):
        pad(S("ab", 4), 3)


def test_binop_examples():
    assert apply_binop("^", S("hi", 5), S("yo", 3)) == S("hiyo", 8)
    assert apply_binop("<", S(3, 8), S(5, 8)) == S(1, 8)
    assert apply_binop("=", S("ab", 4), S("ab", 6)) == S(1, 8)
    assert apply_binop("!=", S("ab", 4), S("ab", 6)) == S(0, 8)


def test_int_ops_wrap():
    assert apply_binop("+", S.of(INT_MAX), S.of(1)).base == INT_MIN
    assert apply_binop("*", S.of(INT_MIN), S.of(-1)).base == INT_MIN
    assert wrap64(1 << 64) == 0


def test_sort_mismatch():
    with pytest.raises(SortError):
        apply_binop("+", S("a", 1), S(1, 8))
    with pytest.raises(SortError):
        apply_binop("<", S("a", 1), S("b", 1))
    assert op_signature("^", True, True) is None


def test_safe_eq_examples():
    assert safe_eq(S("ab", 4), S("ab", 4)) == 1
    assert safe_eq(S("ab", 4), S("abc", 4)) == 0
    assert safe_eq(S("", 3), S("", 3)) == 1


def test_safe_eq_sees_every_bit_of_a_byte():
    # "a" and "c" differ in a bit other than the lowest one
    assert safe_eq(S("a", 1), S("c", 1)) == 0
    assert safe_eq(S("ab", 2), S("a`", 2)) == 0


def test_safe_select_examples():
    assert safe_select(0, S("xy", 3), S("ab", 3)) == S("xy", 3)
    assert safe_select(1, S(5, 8), S(9, 8)) == S(9, 8)
    assert safe_select(1, S("a", 2), S("a", 2)) == S("a", 2)
    assert safe_select(1, S(-5, 8), S(INT_MIN, 8)) == S(INT_MIN, 8)
    assert safe_select(0, S("abc", 3), S("", 5)) == S("abc", 5)


def test_safe_concat_examples():
    assert safe_concat(S("a", 2), S("b", 1)) == S("ab", 3)
    assert safe_concat(S("", 0), S("x", 1)) == S("x", 1)
    assert safe_concat(S("ab", 5), S("", 4)) == S("ab", 9)
    assert safe_concat(S("é", 3), S("ü", 2)) == S("éü", 5)


def test_counter_formulas():
    c = CtCounters()
    safe_eq(S("a", 2), S("b", 5), c)
    assert c.as_tuple() == (5, 5)
    c = CtCounters()
    safe_select(1, S("a", 2), S("b", 5), c)
    assert c.as_tuple() == (5, 5)
    c = CtCounters()
    safe_select(1, S(1, 8), S(2, 8), c)
    assert c.as_tuple() == (1, 8)
    c = CtCounters()
    safe_concat(S("a", 2), S("b", 3), c)
    assert c.as_tuple() == (25, 25)


int_values = st.integers(INT_MIN, INT_MAX).map(S.of)


@given(st.sampled_from(BINOPS), st.one_of(
    st.tuples(int_values, int_values), st.tuples(sized_values(6), sized_values(6))))
def test_binop_results_are_well_formed(op, pair):
    a, b = pair
    if op_signature(op, a.is_int, b.is_int) is None:
        with pytest.raises(SortError):
            apply_binop(op, a, b)
        return
    r = apply_binop(op, a, b)
    assert size_of(r.base) <= r.size
    if r.is_int:
        assert r.size == 8 and INT_MIN <= r.base <= INT_MAX


@given(st.integers(0, 1), sized_values(), sized_values())
def test_safe_select_oracle(bit, a, c):
    if a.is_int != c.is_int:
        with pytest.raises(SortError):
            safe_select(bit, a, c)
        return
    r = safe_select(bit, a, c)
    assert r.base == (c.base if bit else a.base)
    assert r.size == max(a.size, c.size)


@given(st.text(max_size=4), st.text(max_size=4), st.integers(0, 4), st.integers(0, 4))
def test_unicode_oracles(s1, s2, p1, p2):
    a = S(s1, size_of(s1) + p1)
    b = S(s2, size_of(s2) + p2)
    assert safe_eq(a, b) == int(s1 == s2)
    assert safe_concat(a, b) == S(s1 + s2, a.size + b.size)


@given(st.data())
def test_content_independence(data):
    z1 = data.draw(st.integers(0, 6))
    z2 = data.draw(st.integers(0, 6))

    def draw_string(z):
        s = data.draw(st.text(alphabet="xyz", max_size=z))
        return S(s, z)

    def counts(f, *args):
        c = CtCounters()
        f(*args, c)
        return c.as_tuple()

    a1, a2, b1, b2 = draw_string(z1), draw_string(z1), draw_string(z2), draw_string(z2)
    bits = data.draw(st.tuples(st.integers(0, 1), st.integers(0, 1)))
    assert counts(safe_eq, a1, b1) == counts(safe_eq, a2, b2)
    assert counts(safe_concat, a1, b1) == counts(safe_concat, a2, b2)
    assert counts(safe_select, bits[0], a1, b1) == counts(safe_select, bits[1], a2, b2)
