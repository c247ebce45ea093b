"""Ground-truth objects with exactly known structure, each re-audited when built."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .objects import DomainSpec, FunctionSpec, GraphSpec
from .sets import HashSet


class GenerationError(RuntimeError):
    pass


# --- functions --------------------------------------------------------------

def _domain(params) -> DomainSpec:
    if "n" in params:
        return DomainSpec.bitstrings(int(params["n"]))
    return DomainSpec.indexed(int(params["N"]))


def table_function(domain: DomainSpec, table, name: str, range_bits: int = 0) -> FunctionSpec:
    table = np.asarray(table, dtype=np.int64)
    support = np.flatnonzero(table)

    def support_sampler(rng, size):
        if support.size == 0:
            raise ValueError("support view of an object with empty support")
        return support[rng.integers(0, support.size, size)]

    spec = FunctionSpec(domain, lambda xs: table[np.asarray(xs, dtype=np.int64)], range_bits,
                        support_sampler, int(support.size), name)
    spec.values = table
    return spec


def random_support_k(params, rng) -> FunctionSpec:
    """Exactly k ones. With ``bias`` > 0 the ones favor the lower half of the domain."""
    domain = _domain(params)
    N, k = domain.cardinality, int(params["k"])
    if not 0 <= k <= N:
        raise GenerationError("k outside [0, N]")
    bias = float(params.get("bias", 0.0))
    w = np.where(np.arange(N) < N // 2, 1.0 + bias, 1.0)
    ones = rng.choice(N, size=k, replace=False, p=w / w.sum())
    table = np.zeros(N, dtype=np.int64)
    table[ones] = 1
    spec = table_function(domain, table, "random-support-k")
    if int(spec.values.sum()) != k:
        raise GenerationError("support size audit failed")
    return spec


def planted_union(params, rng) -> FunctionSpec:
    """Indicator of a union of pseudorandom sets, optionally thinned to a density."""
    domain = _domain(params)
    N = domain.cardinality
    sets = [HashSet(int(k), float(params.get("set_density", 0.2)))
            for k in rng.integers(0, 2**62, int(params.get("sets", 3)))]
    xs = np.arange(N, dtype=np.int64)
    table = np.zeros(N, dtype=np.int64)
    for S in sets:
        table |= S.contains(xs).astype(np.int64)
    if "k" in params:
        k = int(params["k"])
        on = np.flatnonzero(table)
        if on.size < k:
            extra = rng.choice(np.flatnonzero(table == 0), k - on.size, replace=False)
            table[extra] = 1
        elif on.size > k:
            table[rng.choice(on, on.size - k, replace=False)] = 0
        if int(table.sum()) != k:
            raise GenerationError("support size audit failed")
    return table_function(domain, table, "planted-union")


def noisy_identity(params, rng) -> FunctionSpec:
    """f(x) = x xor mask(x) on n-bit strings, mask bits set with probability ``flip``."""
    n = int(params["n"])
    domain = DomainSpec.bitstrings(n)
    N = domain.cardinality
    flip = np.asarray(params.get("flip", 0.2), dtype=np.float64) * np.ones(n)
    bits = rng.random((N, n)) < flip[None, :]
    mask = (bits.astype(np.int64) << np.arange(n)).sum(1)
    return table_function(domain, np.arange(N) ^ mask, "noisy-identity", range_bits=n)


# --- graphs -----------------------------------------------------------------

def graph_from_edges(N: int, us, vs, directed: bool, name: str) -> GraphSpec:
    """Graph over ordered pairs; an undirected graph lists each edge in both orders."""
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    if not directed:
        us, vs = np.concatenate([us, vs]), np.concatenate([vs, us])
    codes = np.unique(us * N + vs)
    if codes.size != us.size:
        raise GenerationError("edge list has repeated pairs")

    def evaluator(u, v):
        c = np.asarray(u, dtype=np.int64) * N + np.asarray(v, dtype=np.int64)
        pos = np.minimum(np.searchsorted(codes, c), max(codes.size - 1, 0))
        return (codes[pos] == c).astype(np.int64) if codes.size else np.zeros(c.shape, np.int64)

    def sampler(rng, size):
        if codes.size == 0:
            raise ValueError("support view of an edgeless graph")
        return np.divmod(codes[rng.integers(0, codes.size, size)], N)

    vertices = DomainSpec.indexed(N)
    spec = GraphSpec(vertices, evaluator, directed, sampler, int(codes.size), name)
    spec.codes = codes
    return spec


def adjacency(spec: GraphSpec) -> np.ndarray:
    """Dense 0/1 matrix of a generated graph (no size cap; callers keep N moderate)."""
    N = spec.N
    A = np.zeros(N * N, dtype=np.int8)
    A[spec.codes] = 1
    return A.reshape(N, N)


def _pairing(stubs_a, stubs_b, rng, internal: bool, max_sweeps: int = 200):
    """Random pairing of two stub lists, then switches until no loop or repeated pair remains."""
    a = np.array(stubs_a)
    b = rng.permutation(stubs_b)
    m = a.size
    for _ in range(max_sweeps):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = lo * (1 << 32) + hi if internal else a * (1 << 32) + b
        _, inv, cnt = np.unique(key, return_inverse=True, return_counts=True)
        bad = (cnt[inv] > 1) | ((a == b) if internal else False)
        bad_idx = np.flatnonzero(bad)
        if bad_idx.size == 0:
            return a, b
        partner = rng.integers(0, m, bad_idx.size)
        for i, j in zip(bad_idx.tolist(), partner.tolist()):
            b[i], b[j] = b[j], b[i]
    raise GenerationError("pairing repair did not converge")


def block_regular(params, rng) -> GraphSpec:
    """d-regular simple graph on t equal parts: ``d_in`` neighbors inside, ``d_cross`` to each other part."""
    N, t = int(params["N"]), int(params.get("t", 1))
    if N % t:
        raise GenerationError("N must split into t equal parts")
    n = N // t
    d_in = int(params.get("d_in", params.get("d", 0) if t == 1 else 0))
    d_x = int(params.get("d_cross", 0))
    d = d_in + (t - 1) * d_x
    if (n * d_in) % 2 or d_in >= n or d_x > n:
        raise GenerationError("block degrees infeasible")
    us, vs = [], []
    for attempt in range(int(params.get("retries", 20))):
        try:
            us, vs = [], []
            for j in range(t):
                base = j * n
                if d_in:
                    stubs = np.repeat(np.arange(n), d_in)
                    perm = rng.permutation(stubs)
                    a, b = _pairing(perm[::2], perm[1::2], rng, internal=True)
                    us.append(base + a); vs.append(base + b)
                for i in range(j + 1, t):
                    if d_x:
                        a, b = _pairing(np.repeat(np.arange(n), d_x), np.repeat(np.arange(n), d_x),
                                        rng, internal=False)
                        us.append(base + a); vs.append(i * n + b)
            break
        except GenerationError:
            continue
    else:
        raise GenerationError("pairing model exceeded its retry cap")
    us = np.concatenate(us) if us else np.zeros(0, np.int64)
    vs = np.concatenate(vs) if vs else np.zeros(0, np.int64)
    spec = graph_from_edges(N, us, vs, False, "block-regular")
    deg = np.bincount(spec.codes // N, minlength=N)
    if np.any(deg != d) or np.any(spec.codes // N == spec.codes % N):
        raise GenerationError("regularity audit failed")
    spec.degree = d
    spec.labels = np.arange(N) // n
    return spec


def sparse_random(params, rng) -> GraphSpec:
    """Undirected loopless G(N, p) with p = avg_degree / N."""
    N = int(params["N"])
    p = float(params.get("avg_degree", 16)) / N
    iu = np.triu_indices(N, 1)
    keep = rng.random(iu[0].size) < p
    spec = graph_from_edges(N, iu[0][keep], iu[1][keep], False, "sparse-random")
    return spec


def planted_dense(params, rng) -> GraphSpec:
    """Sparse random graph plus a clique on ``clique`` random vertices."""
    N = int(params["N"])
    p = float(params.get("avg_degree", 16)) / N
    c = int(params["clique"])
    iu = np.triu_indices(N, 1)
    keep = rng.random(iu[0].size) < p
    members = np.sort(rng.choice(N, c, replace=False))
    inside = np.isin(iu[0], members) & np.isin(iu[1], members)
    keep |= inside
    spec = graph_from_edges(N, iu[0][keep], iu[1][keep], False, "planted-dense")
    spec.clique = members
    return spec


def dense_blocks(params, rng) -> GraphSpec:
    """Directed graph with loops: edge (u, v) with probability depending on the halves of u and v.

    With ``m`` set, exactly m ordered edges are kept; with ``d`` set, every row has exactly d.
    """
    N = int(params["N"])
    probs = np.asarray(params.get("probs", [[0.6, 0.2], [0.3, 0.5]]), dtype=np.float64)
    t = probs.shape[0]
    lab = np.arange(N) * t // N
    P = probs[lab[:, None], lab[None, :]]
    if "m" in params:
        m = int(params["m"])
        flat = rng.choice(N * N, m, replace=False, p=(P / P.sum()).ravel())
        A = np.zeros(N * N, dtype=bool); A[flat] = True
        A = A.reshape(N, N)
    elif "d" in params:
        d = int(params["d"])
        A = np.zeros((N, N), dtype=bool)
        for u in range(N):
            A[u, rng.choice(N, d, replace=False, p=P[u] / P[u].sum())] = True
    else:
        A = rng.random((N, N)) < P
    us, vs = np.nonzero(A)
    spec = graph_from_edges(N, us, vs, True, "dense-blocks")
    if "m" in params and spec.codes.size != int(params["m"]):
        raise GenerationError("edge count audit failed")
    if "d" in params and np.any(np.bincount(spec.codes // N, minlength=N) != int(params["d"])):
        raise GenerationError("out-degree audit failed")
    return spec


def noisy_out_degree(params, rng) -> GraphSpec:
    """Out-degree d on n-bit vertices: neighbor i of x is x xor mask_i(x), redrawn on collision."""
    n, d = int(params["n"]), int(params["d"])
    N = 1 << n
    flip = float(params.get("flip", 0.2))
    nbrs = np.empty((N, d), dtype=np.int64)
    x = np.arange(N)
    todo = x
    for _ in range(int(params.get("retries", 64))):
        if todo.size == 0:
            break
        bits = rng.random((todo.size, d, n)) < flip
        masks = (bits.astype(np.int64) << np.arange(n)).sum(2)
        cand = todo[:, None] ^ masks
        srt = np.sort(cand, 1)
        ok = np.all(srt[:, 1:] != srt[:, :-1], axis=1) if d > 1 else np.ones(todo.size, bool)
        nbrs[todo[ok]] = cand[ok]
        todo = todo[~ok]
    if todo.size:
        raise GenerationError("out-degree retry cap exceeded")
    spec = graph_from_edges(N, np.repeat(x, d), nbrs.ravel(), True, "noisy-out-degree")
    spec.vertices = DomainSpec.bitstrings(n)
    spec.neighbors = nbrs
    if np.any(np.bincount(spec.codes // N, minlength=N) != d):
        raise GenerationError("out-degree audit failed")
    return spec


REGISTRY: dict = {
    "random-support-k": random_support_k,
    "planted-union": planted_union,
    "noisy-identity": noisy_identity,
    "block-regular": block_regular,
    "d-regular": lambda p, rng: block_regular(dict(p, t=1, d_in=p["d"]), rng),
    "sparse-random": sparse_random,
    "planted-dense": planted_dense,
    "dense-blocks": dense_blocks,
    "noisy-out-degree": noisy_out_degree,
}


def generate(name: str, params: dict, rng: np.random.Generator):
    try:
        build: Callable = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; known: {sorted(REGISTRY)}") from None
    return build(params, rng)
