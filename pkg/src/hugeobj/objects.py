"""Huge objects, access views and implementations.

Batches of answers are dicts of equal-length numpy arrays. Field names:

* function sample view: ``x``, ``y``
* function support view: ``x``
* graph sample view: ``u``, ``v``, ``y`` (and ``x = u * N + v``)
* graph support view: ``u``, ``v`` (and ``x``)
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .oracle import KeyedOracle, LazyRandomOracle, OracleSeed, as_oracle

TABLE_CUTOFF = 1 << 20
ACCESS_KINDS = ("sample", "support", "entry")


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    n: int = 0
    N: int = 0
    inner: Optional["DomainSpec"] = None

    @staticmethod
    def bitstrings(n: int) -> "DomainSpec":
        if n < 0 or n > 62:
            raise ValueError("bit count must lie in [0, 62]")
        return DomainSpec("bitstrings", n=n)

    @staticmethod
    def indexed(N: int) -> "DomainSpec":
        if N < 1:
            raise ValueError("cardinality must be at least 1")
        return DomainSpec("indexed", N=N)

    @staticmethod
    def pairs(inner: "DomainSpec") -> "DomainSpec":
        return DomainSpec("pairs", inner=inner)

    @property
    def cardinality(self) -> int:
        if self.kind == "bitstrings":
            return 1 << self.n
        if self.kind == "indexed":
            return self.N
        return self.inner.cardinality ** 2

    def to_dict(self) -> dict:
        if self.kind == "pairs":
            return {"kind": "pairs", "inner": self.inner.to_dict()}
        if self.kind == "bitstrings":
            return {"kind": "bitstrings", "n": self.n}
        return {"kind": self.kind, "N": self.N}

    @staticmethod
    def from_dict(d: dict) -> "DomainSpec":
        if d["kind"] == "pairs":
            return DomainSpec.pairs(DomainSpec.from_dict(d["inner"]))
        if d["kind"] == "bitstrings":
            return DomainSpec.bitstrings(d["n"])
        return DomainSpec.indexed(d["N"])


@dataclass
class FunctionSpec:
    domain: DomainSpec
    evaluator: Callable[[np.ndarray], np.ndarray]
    range_bits: int = 0  # 0 means binary range
    support_sampler: Optional[Callable] = None  # (rng, size) -> xs
    support_size_hint: Optional[int] = None
    name: str = "function"

    def table(self) -> np.ndarray:
        card = self.domain.cardinality
        if card > TABLE_CUTOFF:
            raise ValueError("domain too large to tabulate")
        return np.asarray(self.evaluator(np.arange(card, dtype=np.int64)))


@dataclass
class GraphSpec:
    vertices: DomainSpec
    edge_evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    directed: bool = False
    edge_sampler: Optional[Callable] = None  # (rng, size) -> (us, vs)
    edge_count_hint: Optional[int] = None
    name: str = "graph"

    @property
    def N(self) -> int:
        return self.vertices.cardinality

    def adjacency(self) -> np.ndarray:
        N = self.N
        if N * N > TABLE_CUTOFF:
            raise ValueError("graph too large to tabulate")
        u, v = np.divmod(np.arange(N * N, dtype=np.int64), N)
        return np.asarray(self.edge_evaluator(u, v), dtype=bool).reshape(N, N)

    def edge_count(self) -> int:
        """Number of ordered pairs (u, v) that are edges."""
        if self.edge_count_hint is not None:
            return self.edge_count_hint
        return int(self.adjacency().sum())


def add_pair_fields(batch: dict, N: int) -> dict:
    if "u" in batch and "x" not in batch:
        batch["x"] = batch["u"] * N + batch["v"]
    elif "x" in batch and "u" not in batch:
        batch["u"], batch["v"] = np.divmod(batch["x"], N)
    return batch


def concat_batches(batches) -> dict:
    batches = list(batches)
    if not batches:
        return {}
    return {k: np.concatenate([b[k] for b in batches]) for k in batches[0]}


def batch_size(batch: dict) -> int:
    return len(next(iter(batch.values()))) if batch else 0


@dataclass
class AccessView:
    source: object
    kind: str
    _support: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ACCESS_KINDS:
            raise ValueError(f"unknown access kind {self.kind!r}")
        if self.kind == "entry" and not isinstance(self.source, FunctionSpec):
            raise ValueError("entry access is defined only for functions")

    @property
    def is_graph(self) -> bool:
        return isinstance(self.source, GraphSpec)

    def _support_elements(self) -> np.ndarray:
        if self._support is None:
            if self.is_graph:
                flat = np.flatnonzero(self.source.adjacency().ravel())
            else:
                flat = np.flatnonzero(self.source.table())
            if flat.size == 0:
                raise ValueError("support view of an object with empty support")
            self._support = flat.astype(np.int64)
        return self._support

    def draw(self, size: int, rng: np.random.Generator) -> dict:
        src = self.source
        if self.kind == "entry":
            raise ValueError("entry views are queried with entry(), not drawn")
        if self.is_graph:
            N = src.N
            if self.kind == "sample":
                u = rng.integers(0, N, size)
                v = rng.integers(0, N, size)
                y = np.asarray(src.edge_evaluator(u, v)).astype(np.int64)
                return add_pair_fields({"u": u, "v": v, "y": y}, N)
            if src.edge_sampler is not None:
                u, v = src.edge_sampler(rng, size)
                return add_pair_fields({"u": np.asarray(u), "v": np.asarray(v)}, N)
            x = rng.choice(self._support_elements(), size)
            return add_pair_fields({"x": x}, N)
        card = src.domain.cardinality
        if self.kind == "sample":
            x = rng.integers(0, card, size)
            batch = {"x": x, "y": np.asarray(src.evaluator(x)).astype(np.int64)}
        elif src.support_sampler is not None:
            batch = {"x": np.asarray(src.support_sampler(rng, size))}
        else:
            batch = {"x": rng.choice(self._support_elements(), size)}
        if src.domain.kind == "pairs":
            add_pair_fields(batch, src.domain.inner.cardinality)
        return batch

    def entry(self, xs) -> np.ndarray:
        return np.asarray(self.source.evaluator(np.asarray(xs, dtype=np.int64)))


def induce_view(source, kind: str) -> AccessView:
    return AccessView(source, kind)


def draw(view: AccessView, rng: np.random.Generator, size: int = 1) -> dict:
    return view.draw(size, rng)


@dataclass
class ImplementationHandle:
    """Program mapping (oracle, query) to an answer.

    ``answer(oracle, rng, size)`` answers ``size`` draw-queries of the object
    fixed by ``oracle``; ``rng`` is the answering algorithm's own coin flips.
    ``function(oracle, xs)``, when present, exposes the object's entries.
    """

    answer: Callable
    access_kind: str
    description: dict
    function: Optional[Callable] = None
    domain: Optional[DomainSpec] = None
    oracle_mode: str = "random-oracle"
    seed_bytes: int = 32

    def new_oracle(self, rng: np.random.Generator):
        if self.oracle_mode == "random-oracle":
            return LazyRandomOracle(np.random.Generator(np.random.PCG64(rng.integers(0, 2**63))))
        return KeyedOracle(OracleSeed(rng.bytes(self.seed_bytes)))

    def bind(self, source) -> "BoundObject":
        return BoundObject(self, as_oracle(source))

    def draw(self, size: int, rng: np.random.Generator, fresh: bool = True) -> dict:
        """Draw ``size`` answers; ``fresh`` draws a new object for every answer."""
        if not fresh:
            return self.answer(self.new_oracle(rng), rng, size)
        return concat_batches(self.answer(self.new_oracle(rng), rng, 1) for _ in range(size))


@dataclass
class BoundObject:
    handle: ImplementationHandle
    oracle: object

    def query(self, size: int, rng: np.random.Generator) -> dict:
        return self.handle.answer(self.oracle, rng, size)

    def entry(self, xs) -> np.ndarray:
        if self.handle.function is None:
            raise ValueError("implementation does not expose entries")
        return self.handle.function(self.oracle, np.asarray(xs, dtype=np.int64))

    def table(self) -> np.ndarray:
        card = self.handle.domain.cardinality
        if card > TABLE_CUTOFF:
            raise ValueError("domain too large to materialize")
        return self.entry(np.arange(card, dtype=np.int64))


def to_ordinary(impl: ImplementationHandle, security_bits: int = 128) -> ImplementationHandle:
    """Serve the oracle from a keyed stream expanded out of a short seed."""
    if security_bits < 1:
        raise ValueError("security_bits must be positive")
    desc = dict(impl.description, oracle="keyed-blake2b", security_bits=security_bits)
    return dataclasses.replace(impl, oracle_mode="ordinary",
                               seed_bytes=math.ceil(security_bits / 8), description=desc)
