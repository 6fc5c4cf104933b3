import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jomatch.cuts import (BlockCut, ConsistencyCut, CutError, SizeCut, brute_force_bilinear, evaluate,
                          is_violated, make_size_cut, maximize_bilinear, read_cut_pool, roles, separate_all,
                          separate_consistency, separate_via_lp, size_cut_valid_on, write_cut_pool)
from jomatch.instance import ObjectConfig, SolutionMaps, triangle_lhs
from jomatch.polytope_lab import enumerate_vertices

from conftest import C32, POINTS, frac_maps


def nonempty_subsets(d):
    for r in range(1, d + 1):
        yield from itertools.combinations(range(d), r)


def embed(cfg, placements):
    """Zero point on ``cfg`` with worked-example blocks placed on chosen triples."""
    blocks = {(i + 1, j + 1): [[0] * cfg.sizes[j] for _ in range(cfg.sizes[i])] for i, j in cfg.pairs()}
    for (a, b, c), name in placements:
        lut = {1: a, 2: b, 3: c}
        for (x, y), rows in POINTS[name].items():
            blocks[(lut[x] + 1, lut[y] + 1)] = rows
    return frac_maps(cfg, blocks)


def test_example_values(point):
    ex1 = ConsistencyCut((0, 1, 2), "pivot-in-i", 0, {0, 1}, {1})
    assert evaluate(ex1, point("ex1")) == F(3, 2)
    exx3 = ConsistencyCut((0, 1, 2), "pivot-in-k", 1, {0, 1}, {0, 1})
    assert evaluate(exx3, point("exx3")) == F(4, 3)
    blk = BlockCut((0, 1, 2), "pivot-in-k", {0}, {0, 1}, {0, 1})
    assert blk.rhs == 2 and blk.facet_grade
    assert evaluate(blk, point("ex7")) == F(5, 2)
    assert all(is_violated(c, point(n)) for c, n in ((ex1, "ex1"), (exx3, "exx3"), (blk, "ex7")))


def test_size_cut_examples(point):
    c3 = make_size_cut({(0, 0), (0, 1), (1, 0), (1, 1)}, 3, C32)
    assert evaluate(c3, point("ex3")) == 0 and is_violated(c3, point("ex3"))
    c4 = make_size_cut({(0, 0), (1, 0), (1, 1), (2, 0), (2, 1)}, 4, C32)
    assert evaluate(c4, point("ex4")) == 0 and is_violated(c4, point("ex4"))


def test_size_cut_errors():
    with pytest.raises(CutError):
        make_size_cut({(0, 0), (1, 0)}, 3)
    with pytest.raises(CutError):
        make_size_cut({(0, 0), (1, 0)}, 1, C32)  # m_hat below d_max
    with pytest.raises(CutError):
        evaluate(SizeCut(frozenset({(0, 0), (5, 0), (1, 1)}), 2), SolutionMaps.zeros(C32))


def test_consistency_cut_invariants():
    with pytest.raises(CutError):
        ConsistencyCut((0, 1, 2), 0, 0, set(), {0})
    with pytest.raises(CutError):
        ConsistencyCut((1, 0, 2), 0, 0, {0}, {0})
    with pytest.raises(CutError):
        evaluate(ConsistencyCut((0, 1, 2), 0, 2, {0}, {0}), SolutionMaps.zeros(C32))
    cut = ConsistencyCut((0, 1, 2), "pivot-in-j", 1, {0, 1}, {1})
    neg = [var for var, c in cut.terms() if c < 0]
    u, v, _ = roles((0, 1, 2), 2)
    assert {(a, b) for a, b, _, _ in neg} == {(u, v)}
    assert cut.rhs == 1 and cut.as_block().rhs == 1


def test_singletons_reproduce_triangle_rows(point):
    S = point("ex2")
    lhs = triangle_lhs(S.block(0, 1), S.block(1, 2), S.block(0, 2))
    # cut orientation o matches triangle family o; roles give the index placement
    for o in range(3):
        for l, t, q in itertools.product(range(2), repeat=3):
            u_el, v_el, p_el = ((l, t, q), (t, q, l), (l, q, t))[o]
            cut = ConsistencyCut((0, 1, 2), o, p_el, {u_el}, {v_el})
            assert evaluate(cut, S) == lhs[o, l, t, q]


def test_key_symmetry():
    a = ConsistencyCut((0, 1, 2), 0, 1, {0, 1}, {1})
    b = ConsistencyCut((0, 1, 2), 0, 1, frozenset({1, 0}), frozenset({1}))
    assert a.key() == b.key() and a.key() == a.as_block().key()
    assert a.key() != ConsistencyCut((0, 1, 2), 0, 1, {1}, {0, 1}).key()


def test_separation_example(point):
    res = separate_consistency(point("ex1"), (0, 1, 2), "pivot-in-i", 0)
    assert res.value == F(3, 2) and res.D1 == {0, 1} and res.D2 == {1}
    assert res.cut == ConsistencyCut((0, 1, 2), 1, 0, {0, 1}, {1})
    a, b, W = [0, F(1, 2)], [F(1, 2), F(1, 2)], [[0, 0], [0, 0]]  # same cell data in (u,v,p) = (2,3,1)
    assert brute_force_bilinear(a, b, W)[0] == F(3, 2)
    lp = separate_via_lp(point("ex1"), (0, 1, 2), 1, 0)
    assert lp.value == pytest.approx(1.5, abs=1e-9)
    assert np.abs(lp.y - np.round(lp.y)).max() <= 1e-7 and np.abs(lp.z - np.round(lp.z)).max() <= 1e-7


def test_separation_exx3(point):
    res = separate_consistency(point("exx3"), (0, 1, 2), "pivot-in-k", 1)
    assert res.value == F(4, 3) and res.D1 == {0, 1} and res.D2 == {0, 1}
    assert separate_via_lp(point("exx3"), (0, 1, 2), 0, 1).value == pytest.approx(4 / 3, abs=1e-9)
    cuts = separate_all(point("exx3"))
    assert ConsistencyCut((0, 1, 2), 0, 1, {0, 1}, {0, 1}) in cuts


def test_zero_point_no_cut():
    S = SolutionMaps.zeros(C32)
    assert separate_all(S) == []
    r = separate_via_lp(S, (0, 1, 2), 0, 0)
    assert r.value == pytest.approx(0.0, abs=1e-12) and r.cut is None


def test_vertices_yield_no_cut(c32_vertices):
    for k in range(len(c32_vertices)):
        S = c32_vertices.maps(k)
        for tri in C32.triples():
            for o in range(3):
                for l in range(2):
                    assert separate_consistency(S, tri, o, l).value <= 1
        assert separate_all(S) == []


def test_top_k_prefers_larger_violation():
    cfg = ObjectConfig.uniform(6, 2)
    S = embed(cfg, [((0, 1, 2), "exx3"), ((3, 4, 5), "ex1")])
    everything = separate_all(S, limit=1000, strategy="top-k")
    vals = [evaluate(c, S) for c in everything]
    assert max(vals) == F(3, 2) and F(4, 3) in vals
    assert vals == sorted(vals, reverse=True)
    top = separate_all(S, limit=1, strategy="top-k")
    assert len(top) == 1 and evaluate(top[0], S) == F(3, 2) and top[0].triple == (3, 4, 5)
    first = separate_all(S, limit=1, strategy="first-k")
    assert first[0].triple == (0, 1, 2)
    with pytest.raises(ValueError):
        separate_all(S, strategy="best")


def test_negative_data_rejected():
    blocks = {(0, 1): np.array([[0.5, 0], [0, 0]]), (0, 2): np.array([[0.5, 0], [0, 0]]),
              (1, 2): np.array([[-0.01, 0], [0, 0]])}
    S = SolutionMaps(C32, blocks, check_box=False)
    with pytest.raises(CutError):
        separate_consistency(S, (0, 1, 2), 0, 0)
    with pytest.raises(CutError):
        maximize_bilinear([1, -1], [1], [[0], [0]])


def rand_frac(rng, shape, den=12):
    vals = rng.integers(0, den + 1, size=shape)
    return np.array([F(int(v), den) for v in vals.ravel()], dtype=object).reshape(shape)


@pytest.mark.parametrize("seed", range(40))
def test_mincut_matches_bruteforce_and_lp(seed):
    rng = np.random.default_rng(seed)
    du, dv = (int(v) for v in rng.integers(1, 6, size=2))
    a, b, W = rand_frac(rng, du), rand_frac(rng, dv), rand_frac(rng, (du, dv))
    val, D1, D2 = maximize_bilinear(a, b, W)
    assert val == brute_force_bilinear(a, b, W)[0]
    assert sum(a[t] for t in D1) + sum(b[q] for q in D2) - sum(W[t, q] for t in D1 for q in D2) == val


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.data())
def test_mincut_bruteforce_property(du, dv, data):
    fr = st.fractions(min_value=0, max_value=1, max_denominator=7)
    a = data.draw(st.lists(fr, min_size=du, max_size=du))
    b = data.draw(st.lists(fr, min_size=dv, max_size=dv))
    W = [data.draw(st.lists(fr, min_size=dv, max_size=dv)) for _ in range(du)]
    assert maximize_bilinear(a, b, W)[0] == brute_force_bilinear(a, b, W)[0]


@pytest.mark.parametrize("seed", range(15))
def test_cell_separation_three_way(seed):
    rng = np.random.default_rng(1000 + seed)
    cfg = ObjectConfig(3, tuple(int(v) for v in rng.integers(2, 5, size=3)))
    blocks = {}
    for i, j in cfg.pairs():
        raw = rng.random((cfg.sizes[i], cfg.sizes[j]))
        raw /= max(raw.sum(axis=0).max(), raw.sum(axis=1).max())
        blocks[(i + 1, j + 1)] = raw
    S = SolutionMaps.from_pairs(cfg, blocks)
    for o in range(3):
        p = roles((0, 1, 2), o)[2]
        for l in range(cfg.sizes[p]):
            mc = separate_consistency(S, (0, 1, 2), o, l)
            lp = separate_via_lp(S, (0, 1, 2), o, l)
            assert lp.value == pytest.approx(float(mc.value), abs=1e-7)
            assert np.abs(lp.y - np.round(lp.y)).max() <= 1e-7


def test_validity_on_vertices(c32_vertices):
    cuts = []
    for tri in C32.triples():
        for o in range(3):
            for l in range(2):
                for D1 in nonempty_subsets(2):
                    for D2 in nonempty_subsets(2):
                        cuts.append(ConsistencyCut(tri, o, l, D1, D2))
                        for D3 in nonempty_subsets(2):
                            cuts.append(BlockCut(tri, o, D1, D2, D3))
    for k in range(len(c32_vertices)):
        S = c32_vertices.maps(k)
        assert all(evaluate(c, S) <= c.rhs for c in cuts)


@pytest.mark.parametrize("sizes", [(2, 2, 2), (1, 2, 3), (2, 2, 1, 1)])
def test_size_cuts_valid_when_labels_fit(sizes):
    cfg = ObjectConfig(len(sizes), sizes)
    vs = enumerate_vertices(cfg)
    elements = [(o, e) for o in range(cfg.n) for e in range(sizes[o])]
    for m_hat in range(cfg.d_max, cfg.total):
        cuts = [make_size_cut(N, m_hat, cfg) for N in itertools.combinations(elements, m_hat + 1)]
        for k in range(len(vs)):
            used = {v for row in vs.labelings[k] for v in row if v}
            unmatched = sum(v == 0 for row in vs.labelings[k] for v in row)
            if len(used) + unmatched <= m_hat:
                S = vs.maps(k)
                assert all(size_cut_valid_on(c, S) for c in cuts)


def test_cut_pool_round_trip(tmp_path):
    pool = [ConsistencyCut((0, 2, 3), "pivot-in-j", 1, {0, 2}, {1}),
            BlockCut((1, 2, 3), 1, {0}, {1, 2}, {0, 2}),
            make_size_cut({(0, 0), (1, 1), (3, 0)}, 2)]
    path = tmp_path / "pool.json"
    write_cut_pool(pool, path)
    assert '"pivot": 2' in path.read_text()
    assert read_cut_pool(path) == pool
