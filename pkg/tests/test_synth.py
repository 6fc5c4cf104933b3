import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jomatch.instance import validate_partial_map
from jomatch.synth import CorruptionParams, fisher_yates, generate, pair_rng


def test_all_true_complete():
    inst = generate(CorruptionParams(6, 4, 1.0, 1.0, seed=9))
    assert inst.is_complete and inst.is_permutation_sync
    assert all(np.array_equal(b, np.eye(4)) for b in inst.input.values())
    assert inst.ground_truth == tuple((1, 2, 3, 4) for _ in range(6))


def test_determinism_bit_identical():
    a = generate(CorruptionParams(12, 3, 0.4, 0.6, seed=77))
    b = generate(CorruptionParams(12, 3, 0.4, 0.6, seed=77))
    assert a.edges == b.edges
    assert all(a.input[e].tobytes() == b.input[e].tobytes() for e in a.edges)
    c = generate(CorruptionParams(12, 3, 0.4, 0.6, seed=78))
    assert c.edges != a.edges or any(not np.array_equal(a.input[e], c.input[e]) for e in a.edges)


def test_edge_count_binomial():
    n, p = 60, 0.3
    inst = generate(CorruptionParams(n, 2, 0.5, p, seed=5))
    m = n * (n - 1) // 2
    sd = math.sqrt(m * p * (1 - p))
    assert abs(len(inst.edges) - m * p) <= 4 * sd


def test_identity_fraction_monte_carlo():
    # identity blocks come from correct draws plus wrong draws that happen to be I: p + (1-p)/d!
    inst = generate(CorruptionParams(200, 3, 0.5, seed=1))
    m = len(inst.edges)
    assert m >= 10_000
    k = sum(np.array_equal(b, np.eye(3)) for b in inst.input.values())
    expect = 0.5 + 0.5 / 6
    assert abs(expect - 0.5833) < 1e-4
    sd = math.sqrt(m * expect * (1 - expect))
    assert abs(k - m * expect) <= 3 * sd


def test_fisher_yates_uniform():
    rng = np.random.default_rng(0)
    counts = {}
    trials = 24_000
    for _ in range(trials):
        key = tuple(fisher_yates(rng, 4))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 24
    chi2 = sum((c - trials / 24) ** 2 / (trials / 24) for c in counts.values())
    assert chi2 < 60  # 23 dof; the 99.99% quantile is about 54


def test_pair_streams_differ():
    a = pair_rng(3, 0, 1).random(8)
    b = pair_rng(3, 1, 0).random(8)
    c = pair_rng(3, 0, 1).random(8)
    assert np.array_equal(a, c) and not np.array_equal(a, b)


def test_pair_blocks_independent_of_n():
    # a pair's stream depends only on (seed, i, j), so growing n keeps earlier blocks
    small = generate(CorruptionParams(5, 3, 0.3, seed=11))
    big = generate(CorruptionParams(9, 3, 0.3, seed=11))
    assert all(np.array_equal(small.input[e], big.input[e]) for e in small.edges)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 8), d=st.integers(1, 6), p=st.floats(0, 1), q=st.floats(0.05, 1), seed=st.integers(0, 2**32))
def test_blocks_are_permutations(n, d, p, q, seed):
    inst = generate(CorruptionParams(n, d, p, q, seed))
    for b in inst.input.values():
        assert validate_partial_map(b)[0]
        assert (b.sum(axis=0) == 1).all() and (b.sum(axis=1) == 1).all()


@pytest.mark.parametrize("kw", [dict(n=1, d=2, p_true=0.5), dict(n=3, d=0, p_true=0.5),
                                dict(n=3, d=2, p_true=1.5), dict(n=3, d=2, p_true=0.5, p_obs=0.0),
                                dict(n=3, d=2, p_true=0.5, seed=-1)])
def test_param_validation(kw):
    with pytest.raises(ValueError):
        CorruptionParams(**kw)
