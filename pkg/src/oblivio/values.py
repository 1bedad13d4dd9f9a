"""Sized values and the constant-time primitives used to operate on them.

A value is a base (``int`` or ``str``) paired with a public size bound. The
size of an int is fixed at 8 bytes and the size of a string is its UTF-8
byte length. Strings are processed as a zero-padded byte buffer of the
public size plus a secret length, and every loop below runs a number of
times that depends on the public sizes only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

INT_SIZE = 8
_MASK64 = (1 << 64) - 1

Base = Union[int, str]


class PaddingError(ValueError):
    pass


class SortError(TypeError):
    pass


INT_MIN, INT_MAX = -(1 << 63), (1 << 63) - 1


def wrap64(n: int) -> int:
    """Two's-complement wrap to a signed 64-bit integer."""
    n &= _MASK64
    return n - (1 << 64) if n >> 63 else n


def size_of(v: Base) -> int:
    if isinstance(v, bool):
        v = int(v)
    if isinstance(v, int):
        return INT_SIZE
    if isinstance(v, str):
        return len(v.encode("utf-8"))
    raise SortError(f"not a base value: {v!r}")


@dataclass(frozen=True)
class SizedValue:
    base: Base
    size: int

    def __post_init__(self):
        if isinstance(self.base, bool):
            object.__setattr__(self, "base", int(self.base))
        if self.size < size_of(self.base):
            raise PaddingError(
                f"size {self.size} below size_of({self.base!r}) = {size_of(self.base)}")

    @classmethod
    def of(cls, base: Base) -> "SizedValue":
        """The tightest well-formed value for ``base``."""
        return cls(base, size_of(base))

    @property
    def is_int(self) -> bool:
        return isinstance(self.base, int)

    def __str__(self):
        return f"<{self.base!r}|{self.size}>"


def pad(v: SizedValue, z: int) -> SizedValue:
    if z < v.size:
        raise PaddingError(f"cannot pad size {v.size} down to {z}")
    return SizedValue(v.base, z)


@dataclass
class CtCounters:
    """Operation counts gathered by the constant-time primitives.

    Callers own the instance; the primitives only add to it.
    """
    loop_iterations: int = 0
    byte_ops: int = 0

    def as_tuple(self):
        return (self.loop_iterations, self.byte_ops)


def _buffer(v: SizedValue, z: int) -> tuple[bytearray, int]:
    raw = v.base.encode("utf-8")
    buf = bytearray(z)
    buf[:len(raw)] = raw
    return buf, len(raw)


def _decode(buf: bytes, length: int) -> str:
    return bytes(buf[:length]).decode("utf-8")


def _require_str(*vals: SizedValue):
    for v in vals:
        if not isinstance(v.base, str):
            raise SortError(f"expected a string, got {v}")


def _ct_lt(a: int, b: int) -> int:
    # 1 if a < b for small nonnegative ints, without branching on the values
    return ((a - b) >> 63) & 1


def _ct_min(a: int, b: int) -> int:
    lt = _ct_lt(a, b)
    return b ^ ((a ^ b) & -lt)


def _ct_eq(a: int, b: int) -> int:
    d = a ^ b
    return 1 ^ (((d | -d) >> 63) & 1)


def safe_eq(a: SizedValue, b: SizedValue, counters: Optional[CtCounters] = None) -> int:
    """1 if the two strings have the same content, regardless of padding."""
    _require_str(a, b)
    z = max(a.size, b.size)
    s1, n1 = _buffer(a, z)
    s2, n2 = _buffer(b, z)
    x = n1 ^ n2
    m = _ct_min(n1, n2)
    for i in range(z):
        bit = _ct_lt(i, m)
        # full-width mask so every differing bit of the byte survives
        x |= -bit & (s1[i] ^ s2[i])
    if counters is not None:
        counters.loop_iterations += z
        counters.byte_ops += z
    return _ct_eq(x, 0)


def safe_select(bit: int, a: SizedValue, c: SizedValue,
                counters: Optional[CtCounters] = None) -> SizedValue:
    """``a`` when ``bit`` is 0 and ``c`` when it is 1, padded to the larger size."""
    bit &= 1
    nb = 1 ^ bit
    if a.is_int != c.is_int:
        raise SortError(f"select between {a} and {c}")
    z = max(a.size, c.size)
    if a.is_int:
        if counters is not None:
            counters.loop_iterations += 1
            counters.byte_ops += INT_SIZE
        # the masking formula on the unsigned representation
        v = ((nb * (a.base & _MASK64)) | (bit * (c.base & _MASK64)))
        return SizedValue(wrap64(v), z)
    s1, n1 = _buffer(a, z)
    s2, n2 = _buffer(c, z)
    out = bytearray(z)
    for i in range(z):
        out[i] = (nb * s1[i]) | (bit * s2[i])
    n = (nb * n1) | (bit * n2)
    if counters is not None:
        counters.loop_iterations += z
        counters.byte_ops += z
    return SizedValue(_decode(out, n), z)


def safe_concat(a: SizedValue, b: SizedValue,
                counters: Optional[CtCounters] = None) -> SizedValue:
    """Concatenation whose running time depends on the sizes only."""
    _require_str(a, b)
    z1, z2 = a.size, b.size
    s1, n1 = _buffer(a, z1)
    s2, n2 = _buffer(b, z2)
    z = z1 + z2
    out = bytearray(z)
    for i in range(z):
        acc = 0
        for j in range(z1):
            sel = _ct_eq(i, j) & _ct_lt(j, n1)
            acc |= sel * s1[j]
        for j in range(z2):
            sel = _ct_eq(i, j + n1)
            acc |= sel * s2[j]
        out[i] = acc
    if counters is not None:
        counters.loop_iterations += z * (z1 + z2)
        counters.byte_ops += z * (z1 + z2)
    return SizedValue(_decode(out, n1 + n2), z)


# -- binary operators --------------------------------------------------------

INT_OPS = {
    "+": lambda x, y: wrap64(x + y),
    "-": lambda x, y: wrap64(x - y),
    "*": lambda x, y: wrap64(x * y),
    "=": lambda x, y: int(x == y),
    "!=": lambda x, y: int(x != y),
    "<": lambda x, y: int(x < y),
    "<=": lambda x, y: int(x <= y),
    ">": lambda x, y: int(x > y),
    ">=": lambda x, y: int(x >= y),
    "&&": lambda x, y: int(x != 0 and y != 0),
    "||": lambda x, y: int(x != 0 or y != 0),
}

STRING_OPS = ("=", "!=", "^")


def op_signature(op: str, left_is_int: bool, right_is_int: bool) -> Optional[bool]:
    """Whether ``op`` yields an int (True) or a string (False); None if ill-sorted."""
    if left_is_int and right_is_int:
        return True if op in INT_OPS else None
    if not left_is_int and not right_is_int:
        if op in ("=", "!="):
            return True
        if op == "^":
            return False
    return None


def size_op(op: str, z1: int, z2: int, string_operands: bool) -> int:
    if string_operands and op == "^":
        return z1 + z2
    return INT_SIZE


def apply_binop(op: str, a: SizedValue, b: SizedValue,
                counters: Optional[CtCounters] = None) -> SizedValue:
    if op_signature(op, a.is_int, b.is_int) is None:
        raise SortError(f"operator {op} not defined on {a} and {b}")
    if a.is_int:
        return SizedValue(INT_OPS[op](a.base, b.base), INT_SIZE)
    match op:
        case "=":
            return SizedValue(safe_eq(a, b, counters), INT_SIZE)
        case "!=":
            return SizedValue(1 ^ safe_eq(a, b, counters), INT_SIZE)
        case "^":
            return safe_concat(a, b, counters)
