"""Finite security lattices."""

from __future__ import annotations

from itertools import product


class LatticeError(ValueError):
    pass


class Lattice:
    """A finite lattice given by its order relation.

    ``levels`` keeps declaration order so printing is stable. Construction
    closes the order reflexively and transitively and rejects cycles, missing
    bottoms and pairs without a least upper bound.
    """

    def __init__(self, levels, pairs=()):
        self.levels = tuple(dict.fromkeys(levels))
        if not self.levels:
            raise LatticeError("lattice has no levels")
        order = {(a, a) for a in self.levels}
        for lo, hi in pairs:
            if lo not in self.levels or hi not in self.levels:
                raise LatticeError(f"unknown level in pair {lo} < {hi}")
            order.add((lo, hi))
        # Warshall closure
        for k in self.levels:
            for i in self.levels:
                if (i, k) in order:
                    for j in self.levels:
                        if (k, j) in order:
                            order.add((i, j))
        for a, b in product(self.levels, repeat=2):
            if a != b and (a, b) in order and (b, a) in order:
                raise LatticeError(f"cycle between {a} and {b}")
        self._order = frozenset(order)
        bottoms = [a for a in self.levels if all((a, b) in order for b in self.levels)]
        if not bottoms:
            raise LatticeError("lattice has no bottom element")
        self.bottom = bottoms[0]
        self._lub = {}
        for a, b in product(self.levels, repeat=2):
            ubs = [c for c in self.levels if (a, c) in order and (b, c) in order]
            least = [c for c in ubs if all((c, d) in order for d in ubs)]
            if not least:
                raise LatticeError(f"{a} and {b} have no least upper bound")
            self._lub[a, b] = least[0]

    @classmethod
    def two_point(cls):
        return cls(("L", "H"), (("L", "H"),))

    @classmethod
    def from_pairs(cls, pairs):
        levels = []
        for lo, hi in pairs:
            levels += [lo, hi]
        return cls(levels, pairs)

    def __contains__(self, level):
        return level in self.levels

    def leq(self, a, b) -> bool:
        return (a, b) in self._order

    def lub(self, a, b):
        return self._lub[a, b]

    def join(self, *levels):
        out = self.bottom
        for lv in levels:
            out = self._lub[out, lv]
        return out

    def is_bottom(self, level) -> bool:
        return level == self.bottom

    def __eq__(self, other):
        return (isinstance(other, Lattice)
                and set(self.levels) == set(other.levels)
                and self._order == other._order)

    def __hash__(self):
        return hash((frozenset(self.levels), self._order))

    def __repr__(self):
        strict = sorted((a, b) for a, b in self._order if a != b)
        return f"Lattice({list(self.levels)}, {strict})"
