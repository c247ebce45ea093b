"""Deterministic per-(seed, label) randomness.

Every sampled object is a pure function of an oracle. Two oracle kinds exist:

* ``LazyRandomOracle`` samples a fresh random value the first time a label is
  asked for and memoizes it, which behaves like an unbounded random table.
* ``KeyedOracle`` derives every value from a short seed with a keyed hash
  (BLAKE2b), so an object can be rebuilt from its seed alone.

Labels are tuples ``(context, int, int, ...)``. The canonical byte encoding is
the UTF-8 context, a 0x00 separator, then each integer as 8 big-endian bytes.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

SCHEME_VERSION = 1
_INV53 = 1.0 / (1 << 53)
_MASK64 = (1 << 64) - 1


def encode_label(label) -> bytes:
    """Canonical encoding of ``(context, *ints)``."""
    if isinstance(label, (bytes, bytearray)):
        if not label:
            raise ValueError("label must be nonempty")
        return bytes(label)
    if isinstance(label, str):
        label = (label,)
    if not label:
        raise ValueError("label must be nonempty")
    context, *ints = label
    ctx = context.encode("utf-8")
    if b"\x00" in ctx:
        raise ValueError("context string may not contain NUL")
    return ctx + b"\x00" + b"".join(
        (int(v) & _MASK64).to_bytes(8, "big") for v in ints
    )


def bits_to_uniform(word: int) -> float:
    """Top 53 bits of a 64-bit word as a float in [0, 1)."""
    return (word >> 11) * _INV53


@dataclass(frozen=True)
class OracleSeed:
    seed: bytes
    scheme_version: int = SCHEME_VERSION


class KeyedOracle:
    """Oracle whose answers are a keyed hash of the label."""

    mode = "ordinary"

    def __init__(self, seed: OracleSeed):
        key = seed.seed
        if len(key) > 64:
            key = hashlib.blake2b(key).digest()
        self.seed = seed
        self.cache: dict = {}  # per-object memo of derived deterministic values
        prefix = seed.scheme_version.to_bytes(4, "big")
        self._word = hashlib.blake2b(key=key, digest_size=8, person=b"hugeobj.word")
        self._word.update(prefix)
        self._gen = hashlib.blake2b(key=key, digest_size=16, person=b"hugeobj.gen")
        self._gen.update(prefix)

    def u64(self, label) -> int:
        h = self._word.copy()
        h.update(encode_label(label))
        return int.from_bytes(h.digest(), "big")

    def uniform(self, label) -> float:
        return bits_to_uniform(self.u64(label))

    def uniform_many(self, context: str, prefix: tuple, xs, suffix: tuple = ()) -> np.ndarray:
        """Uniforms for labels ``(context, *prefix, x, *suffix)`` over an array of x."""
        head = encode_label((context, *prefix))
        tail = b"".join((int(v) & _MASK64).to_bytes(8, "big") for v in suffix)
        base = self._word.copy()
        base.update(head)
        xs = np.asarray(xs, dtype=np.int64).ravel()
        out = np.empty(xs.size, dtype=np.float64)
        for i, x in enumerate(xs.tolist()):
            h = base.copy()
            h.update((x & _MASK64).to_bytes(8, "big") + tail)
            out[i] = (int.from_bytes(h.digest(), "big") >> 11) * _INV53
        return out

    def generator(self, label) -> np.random.Generator:
        """Bulk stream for a label: Philox keyed by the label's digest."""
        h = self._gen.copy()
        h.update(encode_label(label))
        key = int.from_bytes(h.digest(), "big")
        return np.random.Generator(np.random.Philox(key=key))


class LazyRandomOracle:
    """Random table filled on demand from ``rng``; answers never change once drawn."""

    mode = "random-oracle"

    def __init__(self, rng: np.random.Generator):
        self._bits = rng.bit_generator
        self._words: dict = {}
        self._keys: dict = {}
        self.cache: dict = {}

    def _fresh(self) -> int:
        return int(self._bits.random_raw())

    def u64(self, label) -> int:
        key = _normalize(label)
        w = self._words.get(key)
        if w is None:
            w = self._words[key] = self._fresh()
        return w

    def uniform(self, label) -> float:
        return bits_to_uniform(self.u64(label))

    def uniform_many(self, context: str, prefix: tuple, xs, suffix: tuple = ()) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64).ravel()
        words = self._words
        head = (context, *prefix)
        tail = tuple(suffix)
        out = np.empty(xs.size, dtype=np.float64)
        for i, x in enumerate(xs.tolist()):
            key = head + (x,) + tail
            w = words.get(key)
            if w is None:
                w = words[key] = self._fresh()
            out[i] = (w >> 11) * _INV53
        return out

    def generator(self, label) -> np.random.Generator:
        key = _normalize(label)
        k = self._keys.get(key)
        if k is None:
            k = self._keys[key] = (self._fresh() << 64) | self._fresh()
        return np.random.Generator(np.random.Philox(key=k))


def _normalize(label):
    if isinstance(label, str):
        return (label,)
    return tuple(int(v) if not isinstance(v, str) else v for v in label)


def as_oracle(source):
    """Accept an oracle, an ``OracleSeed`` or raw seed bytes."""
    if isinstance(source, OracleSeed):
        return KeyedOracle(source)
    if isinstance(source, (bytes, bytearray)):
        return KeyedOracle(OracleSeed(bytes(source)))
    return source


def oracle_uniform(seed: OracleSeed, label) -> float:
    return KeyedOracle(seed).uniform(label)


def oracle_bernoulli(seed: OracleSeed, label, p: float) -> int:
    """1 iff the label's uniform is strictly below ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return int(oracle_uniform(seed, label) < p)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


def _splitmix_int(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix64(xs, key: int) -> np.ndarray:
    """Vectorized keyed 64-bit mixer (two SplitMix64 rounds around the key)."""
    z = np.asarray(xs).astype(np.uint64)
    kz = np.uint64(_splitmix_int(key & _MASK64))
    with np.errstate(over="ignore"):
        return _splitmix(_splitmix(z) ^ kz)


def hash_uniform(xs, key: int) -> np.ndarray:
    """Deterministic uniforms in [0,1) for integer points, keyed by ``key``."""
    return (mix64(xs, key) >> np.uint64(11)).astype(np.float64) * _INV53
