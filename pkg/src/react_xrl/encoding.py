"""Bit-string genomes for initial states.

Each state dimension owns an ``m``-bit segment.  A discrete dimension maps the
segment's integer ``i`` to ``floor(i / 2**m * (high + 1 - low) + low)``; a
continuous one to ``i / (2**m - 1) * (high - low) + low``.  Because ``2**m``
rarely divides the number of discrete values, some values own one code more
than others; ``skew_ratio`` quantifies that.
"""
from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import Env, GridSpec

DISCRETE, CONTINUOUS = "discrete", "continuous"

# most likely state at most this many times as likely as the least likely one
SKEW_LIMIT = 1.25
EXHAUSTIVE_MAX_BITS = 24


class EncodingSkewWarning(UserWarning):
    """Some discrete states are encoded by noticeably more codes than others."""


@dataclass(frozen=True)
class DimSpec:
    kind: str
    low: float
    high: float

    @property
    def n_values(self) -> int:
        return int(self.high - self.low) + 1


@dataclass(frozen=True)
class GenomeSpec:
    dims: tuple[DimSpec, ...]
    bits_per_dim: int

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if self.bits_per_dim < 1:
            raise ValueError("bits_per_dim must be >= 1")
        for d in self.dims:
            if d.kind not in (DISCRETE, CONTINUOUS):
                raise ValueError(f"unknown dimension kind {d.kind!r}")
            if d.high < d.low:
                raise ValueError("dimension high must be >= low")
            if d.kind == DISCRETE and 2**self.bits_per_dim < d.n_values:
                raise ValueError(
                    f"{self.bits_per_dim} bits cannot encode {d.n_values} values; need {math.ceil(math.log2(d.n_values))}"
                )
        ratio = self.skew_ratio
        if ratio > SKEW_LIMIT:
            warnings.warn(
                f"{self.bits_per_dim} bits/dim makes some states {ratio:.2f}x as likely as others",
                EncodingSkewWarning,
                stacklevel=3,
            )

    @property
    def length(self) -> int:
        return len(self.dims) * self.bits_per_dim

    @property
    def skew_ratio(self) -> float:
        """Worst per-dimension max/min code count over discrete dimensions (1.0 if none)."""
        ratios = [skew_ratio(self.bits_per_dim, d.n_values) for d in self.dims if d.kind == DISCRETE]
        return max(ratios, default=1.0)


def skew_ratio(bits: int, n_values: int) -> float:
    """Closed form ``ceil(2**m / v) / floor(2**m / v)``."""
    codes = 2**bits
    return math.ceil(codes / n_values) / (codes // n_values)


def genome_spec_for(env: Env, bits_per_dim: int | None = None) -> GenomeSpec:
    if isinstance(env, GridSpec):
        dims = (DimSpec(DISCRETE, 1, env.height - 2), DimSpec(DISCRETE, 1, env.width - 2))
        return GenomeSpec(dims, bits_per_dim or 6)
    dims = tuple(DimSpec(CONTINUOUS, lo, h) for lo, h in zip(env.low, env.high))
    return GenomeSpec(dims, bits_per_dim or 9)


# --------------------------------------------------------------------------- decoding


def bits_to_int(bits: Sequence[int]) -> int:
    """Most significant bit first."""
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def decode_discrete_dim(bits: Sequence[int], low: float, high: float) -> int:
    m = len(bits)
    normalized = bits_to_int(bits) / 2**m
    return int(math.floor(normalized * (high + 1 - low) + low))


def decode_continuous_dim(bits: Sequence[int], low: float, high: float) -> float:
    m = len(bits)
    normalized = bits_to_int(bits) / (2**m - 1)
    return normalized * (high - low) + low


def resolution(spec: GenomeSpec, axis: int = 0) -> float:
    d = spec.dims[axis]
    return (d.high - d.low) / (2**spec.bits_per_dim - 1)


def decode_genome(genome: np.ndarray, spec: GenomeSpec, env: Env | None = None) -> tuple:
    """Decode each segment in order; with ``env`` the result is remapped to a legal start."""
    genome = np.asarray(genome)
    if genome.shape != (spec.length,):
        raise ValueError(f"genome length {genome.shape} does not match spec length {spec.length}")
    m = spec.bits_per_dim
    out = []
    for i, d in enumerate(spec.dims):
        seg = genome[i * m : (i + 1) * m]
        decode = decode_discrete_dim if d.kind == DISCRETE else decode_continuous_dim
        out.append(decode(seg, d.low, d.high))
    state = tuple(out)
    return env.legalize(state) if env is not None else state


def _decode_codes(codes: np.ndarray, d: DimSpec, m: int) -> np.ndarray:
    if d.kind == DISCRETE:
        return np.floor(codes / 2**m * (d.high + 1 - d.low) + d.low).astype(np.int64)
    return codes / (2**m - 1) * (d.high - d.low) + d.low


def occupancy_histogram(
    spec: GenomeSpec, mode: str = "exhaustive", n: int = 81000, seed: int = 0
) -> Counter:
    """Count decoded (un-remapped) states over every genome or over ``n`` random ones."""
    m = spec.bits_per_dim
    if mode == "exhaustive":
        if spec.length > EXHAUSTIVE_MAX_BITS:
            raise ValueError(f"exhaustive enumeration limited to {EXHAUSTIVE_MAX_BITS} bits, got {spec.length}")
        # the code space is a product over dimensions, so per-dimension tallies multiply out
        per_dim = [Counter(_decode_codes(np.arange(2**m), d, m).tolist()) for d in spec.dims]
        hist: Counter = Counter({(): 1})
        for tally in per_dim:
            nxt: Counter = Counter()
            for prefix, c in hist.items():
                for value, k in tally.items():
                    nxt[prefix + (value,)] = c * k
            hist = nxt
        return hist
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        bits = rng.integers(0, 2, size=(n, len(spec.dims), m))
        codes = bits @ (1 << np.arange(m - 1, -1, -1))
        cols = [_decode_codes(codes[:, i], d, m) for i, d in enumerate(spec.dims)]
        return Counter(zip(*(c.tolist() for c in cols)))
    raise ValueError(f"unknown occupancy mode {mode!r}")


def occupancy_ratio(hist: Counter, spec: GenomeSpec | None = None) -> float:
    """max/min count; with ``spec`` (discrete dims only) unvisited states count as zero."""
    counts = list(hist.values())
    if spec is not None and all(d.kind == DISCRETE for d in spec.dims):
        if len(hist) < math.prod(d.n_values for d in spec.dims):
            return math.inf
    return max(counts) / min(counts)


# --------------------------------------------------------------------------- operators


def random_genome(spec: GenomeSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=spec.length, dtype=np.uint8)


def mutate(genome: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Copy with exactly one uniformly chosen bit flipped."""
    if len(genome) == 0:
        raise ValueError("cannot mutate an empty genome")
    child = np.array(genome, dtype=np.uint8, copy=True)
    i = int(rng.integers(len(child)))
    child[i] ^= 1
    return child


def crossover_single_point(
    a: np.ndarray, b: np.ndarray, rng: np.random.Generator, point: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    if len(a) != len(b):
        raise ValueError("parents must have equal length")
    if len(a) < 2:
        return np.array(a, dtype=np.uint8), np.array(b, dtype=np.uint8)
    k = int(rng.integers(1, len(a))) if point is None else point
    if not 1 <= k <= len(a) - 1:
        raise ValueError(f"cut point {k} outside [1, {len(a) - 1}]")
    a, b = np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8)
    return np.concatenate([a[:k], b[k:]]), np.concatenate([b[:k], a[k:]])


def to_bitstring(genome: np.ndarray) -> str:
    return "".join(str(int(b)) for b in genome)


def from_bitstring(text: str) -> np.ndarray:
    if set(text) - {"0", "1"}:
        raise ValueError("bit strings contain only 0 and 1")
    return np.fromiter((int(c) for c in text), dtype=np.uint8, count=len(text))
