"""Membership programs over integer-encoded domains.

A set is a small object with a vectorized ``contains`` and a JSON description,
so predictors that reference sets stay serializable without storing tables.
"""
from __future__ import annotations

import numpy as np

from .oracle import hash_uniform

ENUMERATION_CUTOFF = 1 << 22


class MemberSet:
    kind = "abstract"

    def contains(self, xs) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, xs) -> np.ndarray:
        return self.contains(xs).astype(np.float64)

    def size(self, cardinality: int) -> int:
        if cardinality > ENUMERATION_CUTOFF:
            raise ValueError("set size unknown for domains above the enumeration cutoff")
        total = 0
        for lo in range(0, cardinality, 1 << 20):
            hi = min(cardinality, lo + (1 << 20))
            total += int(self.contains(np.arange(lo, hi, dtype=np.int64)).sum())
        return total

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


class Whole(MemberSet):
    kind = "whole"

    def contains(self, xs):
        return np.ones(np.shape(xs), dtype=bool)

    def size(self, cardinality):
        return cardinality

    def to_dict(self):
        return {"kind": self.kind}


class Interval(MemberSet):
    """Half-open range ``[lo, hi)``; dyadic intervals are bit-prefix sets."""

    kind = "interval"

    def __init__(self, lo: int, hi: int):
        self.lo, self.hi = int(lo), int(hi)

    def contains(self, xs):
        xs = np.asarray(xs)
        return (xs >= self.lo) & (xs < self.hi)

    def size(self, cardinality):
        return max(0, min(self.hi, cardinality) - max(self.lo, 0))

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


class HashSet(MemberSet):
    """Pseudo-random set: x is a member iff its keyed hash falls below ``density``."""

    kind = "hash"

    def __init__(self, key: int, density: float):
        self.key, self.density = int(key), float(density)

    def contains(self, xs):
        return hash_uniform(xs, self.key) < self.density

    def to_dict(self):
        return {"kind": self.kind, "key": self.key, "density": self.density}


class Bitmap(MemberSet):
    """Explicit membership table, for small domains only."""

    kind = "bitmap"

    def __init__(self, mask):
        self.mask = np.asarray(mask, dtype=bool)

    def contains(self, xs):
        return self.mask[np.asarray(xs)]

    def size(self, cardinality):
        return int(self.mask.sum())

    def to_dict(self):
        return {"kind": self.kind, "members": np.flatnonzero(self.mask).tolist(),
                "cardinality": int(self.mask.size)}


class BitSet(MemberSet):
    """Points whose bit ``j`` equals ``value``."""

    kind = "bit"

    def __init__(self, j: int, value: int = 1):
        self.j, self.value = int(j), int(value)

    def contains(self, xs):
        return ((np.asarray(xs) >> self.j) & 1) == self.value

    def size(self, cardinality):
        if cardinality & (cardinality - 1) == 0 and (1 << self.j) < cardinality:
            return cardinality // 2
        return super().size(cardinality)

    def to_dict(self):
        return {"kind": self.kind, "j": self.j, "value": self.value}


class Complement(MemberSet):
    kind = "complement"

    def __init__(self, inner: MemberSet):
        self.inner = inner

    def contains(self, xs):
        return ~self.inner.contains(xs)

    def size(self, cardinality):
        return cardinality - self.inner.size(cardinality)

    def to_dict(self):
        return {"kind": self.kind, "inner": self.inner.to_dict()}


class Union(MemberSet):
    kind = "union"

    def __init__(self, parts):
        self.parts = list(parts)

    def contains(self, xs):
        out = np.zeros(np.shape(xs), dtype=bool)
        for part in self.parts:
            out |= part.contains(xs)
        return out

    def to_dict(self):
        return {"kind": self.kind, "parts": [p.to_dict() for p in self.parts]}


class PairCut(MemberSet):
    """Pairs ``(u, v)`` encoded as ``u * N + v`` with u in U and v in V."""

    kind = "cut"

    def __init__(self, U: MemberSet, V: MemberSet, N: int):
        self.U, self.V, self.N = U, V, int(N)

    def contains(self, xs):
        xs = np.asarray(xs)
        return self.U.contains(xs // self.N) & self.V.contains(xs % self.N)

    def size(self, cardinality):
        return self.U.size(self.N) * self.V.size(self.N)

    def to_dict(self):
        return {"kind": self.kind, "U": self.U.to_dict(), "V": self.V.to_dict(), "N": self.N}


def set_from_dict(d: dict) -> MemberSet:
    kind = d["kind"]
    if kind == "whole":
        return Whole()
    if kind == "interval":
        return Interval(d["lo"], d["hi"])
    if kind == "hash":
        return HashSet(d["key"], d["density"])
    if kind == "bitmap":
        mask = np.zeros(d["cardinality"], dtype=bool)
        mask[d["members"]] = True
        return Bitmap(mask)
    if kind == "bit":
        return BitSet(d["j"], d["value"])
    if kind == "complement":
        return Complement(set_from_dict(d["inner"]))
    if kind == "union":
        return Union(set_from_dict(p) for p in d["parts"])
    if kind == "cut":
        return PairCut(set_from_dict(d["U"]), set_from_dict(d["V"]), d["N"])
    raise ValueError(f"unknown set kind {kind!r}")
