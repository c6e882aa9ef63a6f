import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from react_xrl.encoding import (
    CONTINUOUS,
    DISCRETE,
    DimSpec,
    EncodingSkewWarning,
    GenomeSpec,
    bits_to_int,
    crossover_single_point,
    decode_continuous_dim,
    decode_discrete_dim,
    decode_genome,
    from_bitstring,
    genome_spec_for,
    mutate,
    occupancy_histogram,
    occupancy_ratio,
    random_genome,
    resolution,
    skew_ratio,
    to_bitstring,
)
from react_xrl.env import GridSpec, ReachSpec


def bits(text):
    return [int(c) for c in text]


def one_dim(m, v=9):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EncodingSkewWarning)
        return GenomeSpec((DimSpec(DISCRETE, 0, v - 1),), m)


def test_discrete_examples():
    assert decode_discrete_dim(bits("0000"), 0, 8) == 0
    assert decode_discrete_dim(bits("1111"), 0, 8) == math.floor(15 / 16 * 9) == 8


def test_continuous_endpoints_and_spacing():
    assert decode_continuous_dim(bits("1" * 9), -0.25, 0.25) == 0.25
    assert decode_continuous_dim(bits("0" * 9), -0.25, 0.25) == -0.25
    spec = genome_spec_for(ReachSpec())
    assert resolution(spec) == 0.5 / 511
    step = decode_continuous_dim(bits("000000001"), -0.25, 0.25) - decode_continuous_dim(bits("0" * 9), -0.25, 0.25)
    assert step == pytest.approx(0.5 / 511, abs=1e-15)


def _brute_ratio(m, v):
    counts = {}
    for code in range(2**m):
        s = math.floor(Fraction(code, 2**m) * v)
        counts[s] = counts.get(s, 0) + 1
    return Fraction(max(counts.values()), min(counts.values()))


@pytest.mark.parametrize("m,expected", [(4, Fraction(2)), (5, Fraction(4, 3)), (6, Fraction(8, 7))])
def test_skew_sequence(m, expected):
    assert _brute_ratio(m, 9) == expected
    hist = occupancy_histogram(one_dim(m), "exhaustive")
    assert Fraction(max(hist.values()), min(hist.values())) == expected
    assert skew_ratio(m, 9) == float(expected)


def test_power_of_two_is_uniform():
    assert occupancy_ratio(occupancy_histogram(one_dim(4, 16))) == 1.0


@given(st.integers(1, 12), st.integers(1, 64))
def test_skew_closed_form(m, v):
    if 2**m < v:
        return
    assert Fraction(math.ceil(2**m / v), 2**m // v) == _brute_ratio(m, v)


def test_skew_warning_threshold():
    with pytest.warns(EncodingSkewWarning):
        GenomeSpec((DimSpec(DISCRETE, 1, 9),), 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error", EncodingSkewWarning)
        GenomeSpec((DimSpec(DISCRETE, 1, 9),), 6)


def test_insufficient_bits_rejected():
    with pytest.raises(ValueError, match="bits"):
        GenomeSpec((DimSpec(DISCRETE, 0, 8),), 3)


def test_exhaustive_limit():
    spec = GenomeSpec((DimSpec(CONTINUOUS, 0, 1),) * 3, 9)
    with pytest.raises(ValueError):
        occupancy_histogram(spec, "exhaustive")
    assert sum(occupancy_histogram(spec, "sampled", n=500).values()) == 500


def test_exhaustive_two_dim_counts_sum_to_code_space():
    spec = genome_spec_for(GridSpec(), 5)
    hist = occupancy_histogram(spec)
    assert sum(hist.values()) == 2**10
    assert len(hist) == 81


def test_sampled_histogram_is_seeded():
    spec = genome_spec_for(GridSpec())
    assert occupancy_histogram(spec, "sampled", 2000, 3) == occupancy_histogram(spec, "sampled", 2000, 3)


def test_all_zero_grid_genome():
    spec = genome_spec_for(GridSpec())
    assert decode_genome(np.zeros(spec.length, dtype=np.uint8), spec) == (1, 1)


def test_decode_onto_hole_remaps():
    g = GridSpec(holes={(5, 5)})
    spec = genome_spec_for(g)
    # 6 bits, 9 values on [1, 9]: code 30 -> floor(30 / 64 * 9) + 1 = 4 + 1 = 5
    genome = from_bitstring(format(30, "06b") * 2)
    assert decode_genome(genome, spec) == (5, 5)
    assert decode_genome(genome, spec, g) == (4, 5)


def test_decode_is_total_on_holey_grid(holey):
    spec = genome_spec_for(holey)
    legal = set(holey.legal_starts())
    for a in range(64):
        for b in range(64):
            g = from_bitstring(format(a, "06b") + format(b, "06b"))
            assert decode_genome(g, spec, holey) in legal


def test_genome_length_checked():
    spec = genome_spec_for(GridSpec())
    with pytest.raises(ValueError):
        decode_genome(np.zeros(5, dtype=np.uint8), spec)


@given(st.integers(1, 10), st.data())
def test_discrete_decode_bounds_and_monotone(m, data):
    lo = data.draw(st.integers(-5, 5))
    hi = data.draw(st.integers(lo, lo + 2**m - 1))
    prev = None
    for code in range(2**m):
        v = decode_discrete_dim(bits(format(code, f"0{m}b")), lo, hi)
        assert lo <= v <= hi
        assert prev is None or v >= prev
        prev = v


def test_mutation_is_single_flip():
    rng = np.random.default_rng(0)
    g = random_genome(genome_spec_for(GridSpec()), rng)
    orig = g.copy()
    child = mutate(g, rng)
    assert np.array_equal(g, orig)
    assert int(np.sum(child != g)) == 1
    with pytest.raises(ValueError):
        mutate(np.zeros(0, dtype=np.uint8), rng)


def test_double_flip_same_index_is_identity():
    g = from_bitstring("010110")
    child = g.copy()
    child[3] ^= 1
    child[3] ^= 1
    assert np.array_equal(child, g)


def test_mutation_index_frequency():
    rng = np.random.default_rng(11)
    g = np.zeros(12, dtype=np.uint8)
    n = 10_000
    counts = sum(mutate(g, rng).astype(np.int64) for _ in range(n))
    assert counts.sum() == n
    assert np.all(np.abs(counts / n - 1 / 12) <= 0.05)
    # chi-square with 11 degrees of freedom; 31.26 is its 0.999 quantile
    expected = n / 12
    assert float(np.sum((counts - expected) ** 2 / expected)) < 31.26


def test_crossover_examples():
    rng = np.random.default_rng(0)
    a, b = from_bitstring("0000"), from_bitstring("1111")
    c1, c2 = crossover_single_point(a, b, rng, point=2)
    assert (to_bitstring(c1), to_bitstring(c2)) == ("0011", "1100")
    same1, same2 = crossover_single_point(a, a, rng)
    assert np.array_equal(same1, a) and np.array_equal(same2, a)
    with pytest.raises(ValueError):
        crossover_single_point(a, from_bitstring("111"), rng)
    with pytest.raises(ValueError):
        crossover_single_point(a, b, rng, point=4)


@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_crossover_conserves_columns(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 2, n, dtype=np.uint8), rng.integers(0, 2, n, dtype=np.uint8)
    c1, c2 = crossover_single_point(a, b, rng)
    assert len(c1) == len(c2) == n
    assert np.array_equal(np.sort(np.stack([a, b]), 0), np.sort(np.stack([c1, c2]), 0))


def test_random_genome_statistics():
    spec = genome_spec_for(GridSpec())
    assert np.array_equal(random_genome(spec, np.random.default_rng(5)), random_genome(spec, np.random.default_rng(5)))
    rng = np.random.default_rng(1)
    pop = np.stack([random_genome(spec, rng) for _ in range(10_000)])
    assert np.all(np.abs(pop.mean(axis=0) - 0.5) <= 0.02)
    covered = {decode_genome(g, spec) for g in pop}
    assert len(covered) >= 0.95 * 81


def test_bitstring_round_trip():
    g = from_bitstring("1011001")
    assert to_bitstring(g) == "1011001"
    assert bits_to_int(g) == 0b1011001
    with pytest.raises(ValueError):
        from_bitstring("10x")
