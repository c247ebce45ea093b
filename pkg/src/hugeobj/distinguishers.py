"""Single-draw distinguisher classes and Monte-Carlo gap estimation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .objects import AccessView, DomainSpec, ImplementationHandle, batch_size
from .sets import HashSet, Interval, MemberSet, PairCut, set_from_dict


@dataclass
class SignedTest:
    """A test g with values in [-1, 1]; ``member`` is set when g is an indicator."""

    g: Callable[[np.ndarray], np.ndarray]
    member: Optional[MemberSet] = None
    coordinate: Optional[int] = None

    def __call__(self, xs) -> np.ndarray:
        return np.asarray(self.g(np.asarray(xs)), dtype=np.float64)


@dataclass
class Distinguisher:
    kind: str  # "set" | "coord_set" | "cut" | "partition_cell"
    domain: DomainSpec
    S: Optional[MemberSet] = None
    j: int = 0
    U: Optional[MemberSet] = None
    V: Optional[MemberSet] = None
    i: int = 0
    partition: object = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        if not self.name:
            self.name = {
                "set": lambda: f"set:{_short(self.S)}",
                "coord_set": lambda: f"coord:{_short(self.S)}:j{self.j}",
                "cut": lambda: f"cut:{_short(self.U)}x{_short(self.V)}",
                "partition_cell": lambda: f"cell:{self.i},{self.j}",
            }[self.kind]()

    def accept(self, batch: dict) -> np.ndarray:
        k = self.kind
        if k == "set":
            _need(batch, "x", k)
            out = self.S.contains(batch["x"])
            if "y" in batch:
                out = out & (batch["y"] == 1)
            return out
        if k == "coord_set":
            # edges of an out-degree graph arrive as (u, v); function samples as (x, y)
            point, bits = ("x", "y") if "y" in batch else ("u", "v")
            _need(batch, point, k)
            _need(batch, bits, k)
            return self.S.contains(batch[point]) & (((batch[bits] >> self.j) & 1) == 1)
        if k == "cut":
            _need(batch, "u", k)
            out = self.U.contains(batch["u"]) & self.V.contains(batch["v"])
            if "y" in batch:
                out = out & (batch["y"] == 1)
            return out
        if k == "partition_cell":
            _need(batch, "u", k)
            part = self.partition.part_of
            return (part(batch["u"]) == self.i) & (part(batch["v"]) == self.j)
        raise ValueError(f"unknown distinguisher kind {k!r}")

    def membership(self) -> MemberSet:
        """The accepted point set of a set-like distinguisher."""
        if self.kind in ("set", "coord_set"):
            return self.S
        if self.kind == "cut":
            return PairCut(self.U, self.V, self.domain.cardinality)
        raise ValueError("partition cells have no membership program")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name, "domain": self.domain.to_dict()}
        if self.S is not None:
            d["S"] = self.S.to_dict()
        if self.kind == "coord_set":
            d["j"] = self.j
        if self.kind == "cut":
            d["U"], d["V"] = self.U.to_dict(), self.V.to_dict()
        if self.kind == "partition_cell":
            d["i"], d["j"] = self.i, self.j
        return d


def _short(s: MemberSet) -> str:
    d = s.to_dict()
    if d["kind"] == "hash":
        return f"h{d['key'] % 100000}"
    if d["kind"] == "interval":
        return f"[{d['lo']},{d['hi']})"
    return d["kind"]


def _need(batch, key, kind):
    if key not in batch:
        raise ValueError(f"{kind} distinguisher cannot read answers without field {key!r}")


def to_signed_test(D: Distinguisher) -> SignedTest:
    """g_D(x) = Pr[D accepts (x, 1)] - Pr[D accepts (x, 0)]."""
    if D.kind == "set":
        return SignedTest(lambda xs: D.accept({"x": xs, "y": np.ones_like(xs)}).astype(float)
                          - D.accept({"x": xs, "y": np.zeros_like(xs)}).astype(float),
                          member=D.S)
    if D.kind == "coord_set":
        one = 1 << D.j
        return SignedTest(lambda xs: D.accept({"x": xs, "y": np.full_like(xs, one)}).astype(float)
                          - D.accept({"x": xs, "y": np.zeros_like(xs)}).astype(float),
                          member=D.S, coordinate=D.j)
    if D.kind == "cut":
        cut = D.membership()
        return SignedTest(cut, member=cut)
    raise ValueError("partition-cell distinguishers read support samples only")


@dataclass
class Estimate:
    prob: float
    radius: float
    samples: int


def hoeffding_radius(samples: int, delta: float) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * samples))


def _draw(source, samples, rng, fresh):
    if isinstance(source, AccessView):
        return source.draw(samples, rng)
    if isinstance(source, ImplementationHandle):
        return source.draw(samples, rng, fresh=fresh)
    raise TypeError(f"cannot draw from {type(source).__name__}")


def estimate_accept(D: Distinguisher, source, samples: int, rng: np.random.Generator,
                    delta: float = 0.05, fresh: bool = True) -> Estimate:
    """Empirical acceptance probability; implementations use a fresh seed per sample by default."""
    if samples < 1:
        raise ValueError("need at least one sample")
    batch = _draw(source, samples, rng, fresh)
    return Estimate(float(np.mean(D.accept(batch))), hoeffding_radius(samples, delta), samples)


@dataclass
class GapEntry:
    name: str
    accept_prob_target: float
    accept_prob_model: float
    gap: float
    radius: float


@dataclass
class GapReport:
    entries: list
    sample_count: int
    delta: float

    @property
    def max_gap(self) -> float:
        return max((e.gap for e in self.entries), default=0.0)

    @property
    def radius(self) -> float:
        return hoeffding_radius(self.sample_count, self.delta) if self.sample_count else 0.0

    def worst(self) -> Optional[GapEntry]:
        return max(self.entries, key=lambda e: e.gap, default=None)

    def to_dict(self) -> dict:
        return {
            "max_gap": self.max_gap,
            "radius": self.radius,
            "sample_count": self.sample_count,
            "delta": self.delta,
            "entries": [e.__dict__ for e in self.entries],
        }

    def to_csv(self) -> str:
        lines = ["name,accept_prob_target,accept_prob_model,gap,radius"]
        for e in self.entries:
            lines.append(f"{e.name},{e.accept_prob_target!r},{e.accept_prob_model!r},{e.gap!r},{e.radius!r}")
        return "\n".join(lines) + "\n"


def gap_report(dclass, target, model, samples: int, delta: float,
               rng: np.random.Generator, fresh: bool = True) -> GapReport:
    """Per-distinguisher gaps, every distinguisher reading the same draws."""
    dclass = list(dclass)
    if not dclass:
        return GapReport([], 0, delta)
    tb = _draw(target, samples, rng, fresh)
    mb = _draw(model, samples, rng, fresh)
    r = hoeffding_radius(samples, delta)
    entries = []
    for D in dclass:
        pt = float(np.mean(D.accept(tb)))
        pm = float(np.mean(D.accept(mb)))
        entries.append(GapEntry(D.name, pt, pm, abs(pt - pm), r))
    assert batch_size(tb) == batch_size(mb) == samples
    return GapReport(entries, samples, delta)


# --- class generators -------------------------------------------------------

def random_sets(domain: DomainSpec, t: int, density: float = 0.5, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    keys = rng.integers(0, 2**63, t)
    return [Distinguisher("set", domain, S=HashSet(int(k), density), name=f"set{i}")
            for i, k in enumerate(keys)]


def dyadic_intervals(domain: DomainSpec, levels: int) -> list:
    """All intervals of the first ``levels`` halvings of the domain (bit-prefix sets)."""
    N = domain.cardinality
    out = []
    for depth in range(1, levels + 1):
        parts = 1 << depth
        for z in range(parts):
            lo, hi = z * N // parts, (z + 1) * N // parts
            if hi > lo:
                out.append(Distinguisher("set", domain, S=Interval(lo, hi)))
    return out


def coordinate_tests(domain: DomainSpec, sets, n_out: int) -> list:
    """Product class: every set paired with every output coordinate."""
    members = [s.S if isinstance(s, Distinguisher) else s for s in sets]
    return [Distinguisher("coord_set", domain, S=S, j=j) for S in members for j in range(n_out)]


def random_cuts(vertices: DomainSpec, t: int, density: float = 0.5, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    keys = rng.integers(0, 2**63, (t, 2))
    return [Distinguisher("cut", vertices, U=HashSet(int(a), density), V=HashSet(int(b), density),
                          name=f"cut{i}")
            for i, (a, b) in enumerate(keys)]


def partition_cells(partition) -> list:
    t = partition.t
    vertices = DomainSpec.indexed(partition.N)
    return [Distinguisher("partition_cell", vertices, i=i, j=j, partition=partition)
            for i in range(t) for j in range(t)]


def distinguisher_from_dict(d: dict, partition=None) -> Distinguisher:
    domain = DomainSpec.from_dict(d["domain"])
    kind = d["kind"]
    if kind == "set":
        return Distinguisher(kind, domain, S=set_from_dict(d["S"]), name=d["name"])
    if kind == "coord_set":
        return Distinguisher(kind, domain, S=set_from_dict(d["S"]), j=d["j"], name=d["name"])
    if kind == "cut":
        return Distinguisher(kind, domain, U=set_from_dict(d["U"]), V=set_from_dict(d["V"]),
                             name=d["name"])
    return Distinguisher(kind, domain, i=d["i"], j=d["j"], partition=partition, name=d["name"])
