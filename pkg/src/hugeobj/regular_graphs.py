"""Truthful d-regular graph models against partition-cell distinguishers.

A learned ``EdgeCountTable`` says how many ports of part j lead to part i.
The implementation realizes the table with a fixed port layout:

* vertex of rank r in part j owns ports l = 0..d-1 at position P = l*n_j + r,
  and the positions of part j are cut into consecutive segments, one per
  counterpart part i of length K[i, j];
* a cross segment is matched to its partner segment by listing one side
  vertex by vertex and the other side cyclically, which never joins a pair twice;
* an internal segment is wired as a circulant plus at most two matchings, so
  it is simple and loop-free by construction.

Per seed, vertex ranks inside each part are relabeled by a keyed Feistel
permutation, which is what makes the graph random.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .objects import DomainSpec, ImplementationHandle, add_pair_fields
from .oracle import mix64


class InfeasibleTableError(ValueError):
    pass


class Partition:
    """Vertex partition; ``labels[v]`` is the part of vertex v."""

    def __init__(self, labels):
        self.labels = np.asarray(labels, dtype=np.int64)
        self.t = int(self.labels.max()) + 1
        self.sizes = np.bincount(self.labels, minlength=self.t)
        if np.any(self.sizes == 0):
            raise ValueError("every part must be nonempty")
        self.members = [np.flatnonzero(self.labels == j) for j in range(self.t)]
        self._rank = np.empty(self.N, dtype=np.int64)
        for m in self.members:
            self._rank[m] = np.arange(m.size)

    @staticmethod
    def contiguous(N: int, t: int) -> "Partition":
        return Partition(np.arange(N) * t // N)

    @property
    def N(self) -> int:
        return self.labels.size

    def part_of(self, xs) -> np.ndarray:
        return self.labels[np.asarray(xs, dtype=np.int64)]

    def rank(self, xs) -> np.ndarray:
        return self._rank[np.asarray(xs, dtype=np.int64)]

    def to_dict(self) -> dict:
        return {"labels": self.labels.tolist()}


@dataclass
class EdgeCountTable:
    """K[i, j] = ports of part j leading to part i; K[j, j] counts both ends of internal edges."""

    K: np.ndarray

    def residuals(self, partition: Partition, d: int) -> np.ndarray:
        return self.K.sum(axis=0) - d * partition.sizes

    def check(self, partition: Partition, d: int) -> None:
        K = self.K
        if K.shape != (partition.t, partition.t) or np.any(K < 0):
            raise InfeasibleTableError("table must be a nonnegative t x t matrix")
        if not np.array_equal(K, K.T):
            raise InfeasibleTableError("table must be symmetric")
        if np.any(np.diag(K) % 2):
            raise InfeasibleTableError("internal port counts must be even")
        if np.any(self.residuals(partition, d)):
            raise InfeasibleTableError("column sums must equal d * part size")

    def to_dict(self) -> dict:
        return {"K": self.K.tolist()}


# --- learning ---------------------------------------------------------------

def estimation_samples(partition: Partition, eps: float, delta: float) -> int:
    t = partition.t
    return math.ceil(32 * math.log(2 * t * t / delta) / eps**2 * partition.N / partition.sizes.min())


def estimate_counts(us, vs, partition: Partition, d: int) -> np.ndarray:
    """Unrounded table from sampled ordered edges (each undirected edge appears in both orders)."""
    t, m = partition.t, len(us)
    c = np.zeros((t, t))
    np.add.at(c, (partition.part_of(us), partition.part_of(vs)), 1)
    dN = d * partition.N
    est = (c + c.T) / (2 * m) * dN
    np.fill_diagonal(est, np.diag(c) / m * dN)
    return est


def round_table(est: np.ndarray, d: int, N: int) -> np.ndarray:
    """Round to integers keeping the total dN and even diagonals.

    Works in undirected-edge units (K[i, j] for i < j, K[j, j] / 2) and uses
    largest remainders so the units sum to dN / 2.
    """
    t = est.shape[0]
    iu = np.triu_indices(t)
    units = np.where(iu[0] == iu[1], est[iu] / 2, est[iu])
    goal = d * N // 2
    base = np.floor(units).astype(np.int64)
    short = goal - int(base.sum())
    order = np.lexsort((np.arange(units.size), -(units - base)))
    if short > 0:
        base[order[:short]] += 1
    elif short < 0:
        # over-full after flooring cannot happen with nonnegative parts; guard anyway
        for idx in order[::-1]:
            if short == 0:
                break
            if base[idx] > 0:
                base[idx] -= 1
                short += 1
    K = np.zeros((t, t), dtype=np.int64)
    vals = np.where(iu[0] == iu[1], 2 * base, base)
    K[iu] = vals
    K[(iu[1], iu[0])] = vals
    return K


def transfer(K: np.ndarray, partition: Partition, d: int) -> tuple:
    """Move one port from an over-full part to an under-full one; smallest (i, i', j) first."""
    e = K.sum(axis=0) - d * partition.sizes
    t = K.shape[0]
    for i in np.flatnonzero(e > 0).tolist():
        for ip in np.flatnonzero(e < 0).tolist():
            for j in range(t):
                if j not in (i, ip) and K[i, j] > 0:
                    K[i, j] -= 1; K[j, i] -= 1
                    K[ip, j] += 1; K[j, ip] += 1
                    return i, ip, j
                if j == i and K[i, i] >= 2:
                    K[i, i] -= 2
                    K[i, ip] += 1; K[ip, i] += 1
                    return i, ip, j
                if j == ip and K[i, ip] >= 1:
                    K[i, ip] -= 1; K[ip, i] -= 1
                    K[ip, ip] += 2
                    return i, ip, j
    raise InfeasibleTableError("no transfer move available")


def fallback_table(partition: Partition, d: int) -> np.ndarray:
    """A feasible table with internal edges only, plus single cross edges to fix odd parts."""
    if (d * partition.N) % 2:
        raise InfeasibleTableError("d * N must be even")
    t = partition.t
    K = np.diag(d * partition.sizes).astype(np.int64)
    odd = [j for j in range(t) if K[j, j] % 2]
    for a, b in zip(odd[::2], odd[1::2]):
        K[a, a] -= 1; K[b, b] -= 1
        K[a, b] += 1; K[b, a] += 1
    return K


@dataclass
class UniformDegreeFit:
    table: EdgeCountTable
    estimate: np.ndarray
    initial_residuals: list
    transfers: int
    aborted: bool
    samples: int

    def to_dict(self) -> dict:
        return {"K": self.table.K.tolist(), "estimate": self.estimate.tolist(),
                "initial_residuals": self.initial_residuals, "transfers": self.transfers,
                "aborted": self.aborted, "samples": self.samples}


def learn_uniform_degree(target, partition: Partition, d: int, eps: float, delta: float,
                         rng: np.random.Generator, samples: Optional[int] = None) -> UniformDegreeFit:
    """Estimate the table from sampled edges, round it, then repair residuals port by port."""
    if (d * partition.N) % 2:
        raise InfeasibleTableError("d * N must be even for a d-regular graph")
    m = samples or estimation_samples(partition, eps, delta)
    batch = target.draw(m, rng)
    est = estimate_counts(batch["u"], batch["v"], partition, d)
    K = round_table(est, d, partition.N)
    e = K.sum(axis=0) - d * partition.sizes
    initial = e.tolist()
    if np.any(np.abs(e) >= d * eps * partition.sizes / 2):
        table = EdgeCountTable(fallback_table(partition, d))
        table.check(partition, d)
        return UniformDegreeFit(table, est, initial, 0, True, m)
    moves = 0
    while np.any(K.sum(axis=0) != d * partition.sizes):
        transfer(K, partition, d)
        moves += 1
    table = EdgeCountTable(K)
    table.check(partition, d)
    return UniformDegreeFit(table, est, initial, moves, False, m)


# --- port layout ------------------------------------------------------------

def _vertex_major(p, n, K):
    """Cyclic segment position -> vertex-major position (vertex t owns a run of consecutive slots)."""
    q, rem = divmod(K, n)
    t, c = p % n, p // n
    return t * q + np.minimum(t, rem) + c


def _cyclic(pos, n, K):
    q, rem = divmod(K, n)
    big = rem * (q + 1)
    lo = pos < big
    t = np.where(lo, pos // (q + 1), rem + (pos - big) // max(q, 1))
    c = np.where(lo, pos % (q + 1), (pos - big) % max(q, 1))
    return t + c * n


class InternalBlock:
    """Simple graph on n vertices where vertex t has q + [t < rem] edges (qn + rem even)."""

    def __init__(self, n: int, K: int):
        self.n, self.K = n, K
        self.q, self.rem = divmod(K, n)
        q, rem = self.q, self.rem
        if K % 2:
            raise InfeasibleTableError("internal port count must be even")
        if K == 0:
            self.kind, self.shifts = "empty", []
            return
        top = (n - 1) // 2
        if q % 2 == 0:
            self.kind = "even"
            banned = {min(rem // 2, n - rem // 2)} if rem else set()
            need = q // 2
        elif n % 2 == 0:
            self.kind = "antipodal"
            banned = {rem // 2} if rem else set()
            need = (q - 1) // 2
        else:
            self.kind = "pairs"
            self.h = (rem + 1) // 2
            banned = {1, min(self.h, n - self.h)}
            need = (q - 1) // 2
        cands = [s for s in range(1, top + 1) if s not in banned]
        if len(cands) < need:
            raise InfeasibleTableError(f"part of {n} vertices cannot host {K} internal ports simply")
        self.shifts = cands[:need]

    def partner(self, t, c):
        """(t, slot c) -> (t', slot c') for arrays."""
        n, rem = self.n, self.rem
        S = len(self.shifts)
        t2 = np.empty_like(t)
        c2 = np.empty_like(c)
        circ = c < 2 * S
        if circ.any():
            k = c[circ] // 2
            s = np.asarray(self.shifts, dtype=np.int64)[k]
            plus = c[circ] % 2 == 0
            t2[circ] = np.where(plus, t[circ] + s, t[circ] - s) % n
            c2[circ] = np.where(plus, c[circ] + 1, c[circ] - 1)
        extra = ~circ
        if not extra.any():
            return t2, c2
        te, ce = t[extra], c[extra] - 2 * S
        if self.kind == "even":
            half = rem // 2
            t2[extra] = np.where(te < half, te + half, te - half)
            c2[extra] = c[extra]
        elif self.kind == "antipodal":
            half = rem // 2
            anti = ce == 0
            t2[extra] = np.where(anti, (te + n // 2) % n, np.where(te < half, te + half, te - half))
            c2[extra] = c[extra]
        else:
            # slot 2S: pairs (2i, 2i+1) for t < n-1; last slot: matching on J = {n-1} u [0, rem)
            has_p = te < n - 1
            is_p = has_p & (ce == 0)
            jp = (te + 1) % n
            h = self.h
            jq = np.where(jp < h, jp + h, jp - h)
            tq = (jq - 1) % n
            t2[extra] = np.where(is_p, te ^ 1, tq)
            cq = 2 * S + (tq < n - 1)
            c2[extra] = np.where(is_p, c[extra], cq)
        return t2, c2


class _Feistel:
    """Keyed permutation of [0, n) by a 4-round Feistel network with cycle walking."""

    def __init__(self, n: int, key: int):
        self.n = n
        bits = max(2, math.ceil(math.log2(max(n, 2))))
        bits += bits % 2
        self.half = bits // 2
        self.mask = (1 << self.half) - 1
        self.keys = [int(k) for k in mix64(np.arange(4), key)]

    def _round(self, r, x):
        return (mix64(x, self.keys[r]) & np.uint64(self.mask)).astype(np.int64)

    def _enc(self, x):
        L, R = x >> self.half, x & self.mask
        for r in range(4):
            L, R = R, L ^ self._round(r, R)
        return (L << self.half) | R

    def _dec(self, y):
        L, R = y >> self.half, y & self.mask
        for r in reversed(range(4)):
            L, R = R ^ self._round(r, L), L
        return (L << self.half) | R

    def _walk(self, x, step):
        x = step(np.asarray(x, dtype=np.int64))
        bad = x >= self.n
        while bad.any():
            x[bad] = step(x[bad])
            bad = x >= self.n
        return x

    def forward(self, x):
        return self._walk(x, self._enc)

    def inverse(self, y):
        return self._walk(y, self._dec)


class PortLayout:
    """Deterministic port matching for a feasible table; ranks here are before relabeling."""

    def __init__(self, partition: Partition, table: EdgeCountTable, d: int):
        table.check(partition, d)
        self.partition, self.K, self.d = partition, table.K, d
        t = partition.t
        sizes = partition.sizes
        # offsets[j][i]: start of part j's segment toward part i
        self.offsets = np.zeros((t, t + 1), dtype=np.int64)
        for j in range(t):
            self.offsets[j, 1:] = np.cumsum(self.K[:, j])
        self.internal = [InternalBlock(int(sizes[j]), int(self.K[j, j])) for j in range(t)]
        for a in range(t):
            for b in range(a + 1, t):
                k = int(self.K[a, b])
                if k and -(-k // sizes[a]) > sizes[b]:
                    raise InfeasibleTableError(f"cross block ({a},{b}) would repeat a neighbor")

    def match(self, j: int, r, l):
        """Virtual (part j, rank r, port l) -> (part i, rank r', port l')."""
        n = int(self.partition.sizes[j])
        P = np.asarray(l, dtype=np.int64) * n + np.asarray(r, dtype=np.int64)
        seg = np.searchsorted(self.offsets[j], P, side="right") - 1
        parts = np.empty_like(P)
        r2 = np.empty_like(P)
        l2 = np.empty_like(P)
        for i in np.unique(seg).tolist():
            sel = seg == i
            p = P[sel] - self.offsets[j, i]
            K = int(self.K[i, j])
            ni = int(self.partition.sizes[i])
            if i == j:
                blk = self.internal[j]
                tt, cc = blk.partner(p % n, p // n)
                q = tt + cc * n
            elif j < i:
                q = _vertex_major(p, n, K)
            else:
                q = _cyclic(p, ni, K)
            P2 = self.offsets[i, j] + q
            parts[sel] = i
            r2[sel] = P2 % ni
            l2[sel] = P2 // ni
        return parts, r2, l2


def uniform_degree_impl(partition: Partition, table: EdgeCountTable, d: int) -> ImplementationHandle:
    """Support view of a d-regular simple graph whose part-to-part port counts equal the table."""
    layout = PortLayout(partition, table, d)
    N = partition.N
    vertices = DomainSpec.indexed(N)

    def perms(oracle):
        key = ("regular-perms",)
        hit = oracle.cache.get(key)
        if hit is None:
            hit = oracle.cache[key] = [_Feistel(int(n), oracle.u64(("perm", j)))
                                       for j, n in enumerate(partition.sizes)]
        return hit

    def endpoint(oracle, u, l):
        """Neighbor of vertex u through its port l, and the port used on the other side."""
        u = np.asarray(u, dtype=np.int64)
        l = np.asarray(l, dtype=np.int64)
        fe = perms(oracle)
        parts = partition.part_of(u)
        v = np.empty_like(u)
        l2 = np.empty_like(u)
        for j in np.unique(parts).tolist():
            sel = parts == j
            r = fe[j].inverse(partition.rank(u[sel]))
            pi, ri, li = layout.match(j, r, l[sel])
            out = np.empty_like(ri)
            for i in np.unique(pi).tolist():
                s2 = pi == i
                out[s2] = partition.members[i][fe[i].forward(ri[s2])]
            v[sel] = out
            l2[sel] = li
        return v, l2

    def answer(oracle, rng, size):
        u = rng.integers(0, N, size)
        l = rng.integers(0, d, size)
        v, _ = endpoint(oracle, u, l)
        return add_pair_fields({"u": u, "v": v}, N)

    handle = ImplementationHandle(answer, "support",
                                  {"model": "uniform-degree", "d": d, "K": table.K.tolist(),
                                   "partition": partition.to_dict()}, domain=vertices)
    handle.endpoint = endpoint

    def neighbors(oracle):
        u = np.repeat(np.arange(N), d)
        v, _ = endpoint(oracle, u, np.tile(np.arange(d), N))
        return v.reshape(N, d)

    handle.neighbors = neighbors
    return handle


def degree_audit(nbrs: np.ndarray) -> dict:
    """Regularity and simplicity of a graph given as an N x d neighbor array (undirected)."""
    N, d = nbrs.shape
    u = np.repeat(np.arange(N), d)
    v = nbrs.ravel()
    loops = int(np.sum(u == v))
    srt = np.sort(nbrs, axis=1)
    repeats = int(np.sum(srt[:, 1:] == srt[:, :-1])) if d > 1 else 0
    A = np.zeros((N, N), dtype=np.int64)
    np.add.at(A, (u, v), 1)
    symmetric = bool(np.array_equal(A, A.T))
    deg = A.sum(1)
    return {"regular": bool(np.all(deg == d)), "loops": loops, "repeated": repeats,
            "symmetric": symmetric, "simple": loops == 0 and repeats == 0 and symmetric}
