from fractions import Fraction as F

import numpy as np
import pytest

from jomatch.cuts import BlockCut
from jomatch.instance import ObjectConfig, complete_instance, linear_objective
from jomatch.polytope_lab import (SizeGuardError, affine_rank, dimension, enumerate_labelings, enumerate_vertices,
                                  enumerate_vertices_bruteforce, family_inequalities, hull_membership,
                                  ilp_oracle, inequality_from_cut, reconstruct_labeling, universe_size,
                                  verify_facet)
from jomatch.relaxation import VarIndex
from jomatch.synth import CorruptionParams, generate

from conftest import C32, POINTS, frac_maps

# regression constants from exhaustive enumeration (cross-checked by the brute-force filter where it runs)
V32 = 87
V33 = 2971
V42 = 1657


@pytest.mark.parametrize("n,d,count", [(2, 1, 2), (3, 1, 5), (4, 1, 15), (3, 2, V32)])
def test_vertex_counts(n, d, count):
    assert len(enumerate_vertices(ObjectConfig.uniform(n, d))) == count


def test_vertex_counts_larger():
    assert len(enumerate_vertices(ObjectConfig.uniform(3, 3))) == V33
    assert len(enumerate_vertices(ObjectConfig.uniform(4, 2))) == V42


@pytest.mark.parametrize("sizes", [(2, 2, 2), (1, 2, 3), (3, 3, 2), (2, 2, 2, 2), (1, 1, 2, 2, 2), (1, 1, 1, 1, 1)])
def test_two_enumerators_agree(sizes):
    cfg = ObjectConfig(len(sizes), sizes)
    vs = enumerate_vertices(cfg)
    brute = enumerate_vertices_bruteforce(cfg)
    a = {tuple(v) for v in vs.vectors}
    assert len(a) == len(vs)
    assert a == {tuple(v) for v in brute}


def test_labelings_canonical_and_bijective():
    cfg = ObjectConfig(3, (1, 2, 2))
    labs = enumerate_labelings(cfg)
    assert len(set(labs)) == len(labs)
    for lab in labs:
        seen = [v for row in lab for v in row if v]
        # first-occurrence order
        assert [v for k, v in enumerate(seen) if v not in seen[:k]] == list(range(1, len(set(seen)) + 1))
        for row in lab:
            nz = [v for v in row if v]
            assert len(nz) == len(set(nz))
    vs = enumerate_vertices(cfg)
    for k in range(len(vs)):
        assert reconstruct_labeling(vs.maps(k)) == vs.labelings[k]
    assert universe_size(((1, 0), (1, 2))) == 3


def test_enumeration_guard():
    with pytest.raises(SizeGuardError):
        enumerate_vertices(ObjectConfig.uniform(13, 1))
    with pytest.raises(SizeGuardError):
        enumerate_vertices_bruteforce(ObjectConfig.uniform(3, 3))
    big = generate(CorruptionParams(4, 3, 1.0, seed=0))
    with pytest.raises(SizeGuardError):
        ilp_oracle(big)


def test_dimension_c32(c32_vertices):
    assert dimension(C32, c32_vertices) == 12


@pytest.mark.parametrize("n,d,dim", [(3, 3, 27), (4, 2, 24)])
def test_dimension_larger(n, d, dim):
    assert dimension(ObjectConfig.uniform(n, d)) == dim


def test_affine_rank_basics():
    assert affine_rank(np.zeros((0, 3), dtype=np.int64)) == -1
    assert affine_rank(np.array([[1, 2, 3]])) == 0
    assert affine_rank(np.array([[0, 0], [1, 0], [2, 0]])) == 1
    assert affine_rank(np.eye(4, dtype=np.int64)) == 3


def test_facet_examples(c32_vertices):
    vi = VarIndex(C32)
    nonneg = next(q for q in family_inequalities(C32, "nonneg") if q.coef == ((vi.index(0, 1, 0, 0), -1),))
    rep = verify_facet(nonneg, C32, c32_vertices, 12)
    assert rep.valid and rep.tight_rank == 11 and rep.is_facet
    row = next(q for q in family_inequalities(C32, "rowsum") if q.name == "row 1 of X(1,2) <= 1")
    rep = verify_facet(row, C32, c32_vertices, 12)
    assert rep.valid and rep.is_facet
    blk = inequality_from_cut(BlockCut((0, 1, 2), 0, {0}, {0}, {0, 1}), vi)
    assert not blk.facet_grade
    rep = verify_facet(blk, C32, c32_vertices, 12)
    assert rep.valid and not rep.is_facet and rep.tight_rank < 11
    assert rep.tight_rank == 6  # regression constant


def test_size_family_valid_on_fitting_vertices(c32_vertices):
    from jomatch.polytope_lab import size_cut_vertices
    for m_hat in (2, 4):
        V = size_cut_vertices(c32_vertices, m_hat)
        assert len(V)
        for q in family_inequalities(C32, "size", m_hat)[:40]:
            assert (V @ q.vector(V.shape[1]) <= q.rhs).all()


def test_unknown_family():
    with pytest.raises(ValueError):
        family_inequalities(C32, "clique")


def test_hull_vertex_and_midpoint(c32_vertices):
    v = c32_vertices.vectors
    assert hull_membership(v[5], C32, c32_vertices).inside
    mid = [F(int(a) + int(b), 2) for a, b in zip(v[3], v[40])]
    res = hull_membership(mid, C32, c32_vertices)
    assert res.inside and res.weights.sum() == pytest.approx(1.0)


def test_ex6_outside_hull_but_satisfies_families(c32_vertices):
    S = frac_maps(C32, POINTS["ex6"])
    vi = VarIndex(C32)
    x = vi.to_vector(S, dtype=object)
    for fam in ("nonneg", "rowsum", "consistency", "block"):
        for q in family_inequalities(C32, fam):
            assert sum(c * x[j] for j, c in q.coef) <= q.rhs, q.name
    res = hull_membership(S, C32, c32_vertices)
    assert not res.inside
    # the hyperplane is checked exactly: valid on all vertices, violated at the point
    assert all(sum(p * int(val) for p, val in zip(res.pi, row)) <= res.pi0 for row in c32_vertices.vectors)
    assert res.point_value == sum(p * xv for p, xv in zip(res.pi, x)) and res.violation > 0


def test_oracle_all_true_unique():
    inst = generate(CorruptionParams(3, 2, 1.0, seed=3))
    res = ilp_oracle(inst)
    assert res.unique and res.optimum == -6
    assert res.argmin[0].equals(inst.ground_truth_maps())


def test_oracle_on_inconsistent_example_input():
    cfg = ObjectConfig(3, (1, 2, 2))
    blocks = {(0, 1): np.array([[1, 0]]), (0, 2): np.array([[0, 1]]), (1, 2): np.array([[0, 0], [0, 1]])}
    inst = complete_instance(cfg, blocks)
    res = ilp_oracle(inst)
    assert res.optimum >= -3
    # all three input pairs would put two elements of object 2 in one block; the two disjoint ones win
    assert res.optimum == -2 and res.unique
    best = res.argmin[0]
    assert best.block(0, 1).tolist() == [[1, 0]] and best.block(1, 2).tolist() == [[0, 0], [0, 1]]
    assert linear_objective(inst, best) == -2


@pytest.mark.parametrize("seed", range(5))
def test_oracle_argmin_values(seed):
    inst = generate(CorruptionParams(3, 2, 0.3, p_obs=0.8, seed=seed))
    res = ilp_oracle(inst)
    assert all(linear_objective(inst, S) == res.optimum for S in res.argmin)
    vs = enumerate_vertices(inst.config)
    assert min(linear_objective(inst, vs.maps(k)) for k in range(len(vs))) == res.optimum
