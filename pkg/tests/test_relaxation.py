from math import comb

import numpy as np
import pytest

from jomatch.cuts import ConsistencyCut, evaluate
from jomatch.instance import Instance, ObjectConfig, SolutionMaps, complete_instance, triangle_lhs
from jomatch.lp_core import solve
from jomatch.polytope_lab import enumerate_vertices, ilp_oracle
from jomatch.relaxation import (ConfigurationError, VarIndex, attach_cuts, build_jom_basic_lp,
                                build_perm_sync_lp, triangle_count, violated_triangles)
from jomatch.synth import CorruptionParams, generate

from conftest import C32, POINTS, frac_maps


def row_values(model, x):
    return model.matrix() @ x


def feasible(model, x, tol=1e-9):
    act = row_values(model, x)
    s, b = model.senses, model.rhs
    ok = np.where(s == "L", act <= b + tol, np.where(s == "G", act >= b - tol, np.abs(act - b) <= tol))
    return bool(ok.all() and (x >= model.lb - tol).all() and (x <= model.ub + tol).all())


def test_perm_sync_counts():
    inst = generate(CorruptionParams(3, 2, 0.5, seed=0))
    m = build_perm_sync_lp(inst)
    assert m.n_vars == 12
    eq = int((m.senses == "E").sum())
    assert eq == 12
    assert m.n_rows - eq == 24 == 3 * 2 ** 3 * comb(3, 3)


def test_perm_sync_rejects_unequal_sizes():
    inst = Instance(ObjectConfig(3, (2, 2, 3)), frozenset(), {})
    with pytest.raises(ConfigurationError):
        build_perm_sync_lp(inst)


@pytest.mark.parametrize("n,d", [(3, 2), (4, 3), (6, 2)])
def test_all_true_recovers_identity(n, d):
    inst = generate(CorruptionParams(n, d, 1.0, seed=0))
    m = build_perm_sync_lp(inst)
    sol = solve(m)
    assert sol.optimal
    assert sol.objective == pytest.approx(-comb(n, 2) * d)
    assert m.var_index.to_maps(sol.x).equals(inst.ground_truth_maps(), tol=1e-7)


def test_example_point_cut_off_by_basic_lp():
    S = frac_maps(C32, POINTS["ex2"])
    lhs = triangle_lhs(S.block(0, 1), S.block(1, 2), S.block(0, 2))
    # second row, l = t = q = 1
    assert lhs[1, 0, 0, 0] == pytest.approx(1.25) and str(lhs[1, 0, 0, 0]) == "5/4"
    m = build_jom_basic_lp(Instance(C32, frozenset(), {}))
    x = m.var_index.to_vector(S, dtype=float)
    assert not feasible(m, x)


def test_zero_solution_feasible():
    inst = generate(CorruptionParams(4, 3, 0.3, seed=1))
    m = build_jom_basic_lp(inst)
    x = np.zeros(m.n_vars)
    assert feasible(m, x) and m.c @ x == 0


def test_mixed_sizes_variable_count():
    cfg = ObjectConfig(3, (1, 2, 2))
    m = build_jom_basic_lp(Instance(cfg, frozenset(), {}))
    assert m.n_vars == 8
    assert triangle_count(cfg) == 3 * 4


@pytest.mark.parametrize("sizes", [(2, 2, 2), (1, 2, 3), (2, 2, 2, 1), (1, 1, 2, 2)])
def test_every_vertex_feasible(sizes):
    cfg = ObjectConfig(len(sizes), sizes)
    vs = enumerate_vertices(cfg)
    m_basic = build_jom_basic_lp(Instance(cfg, frozenset(), {}))
    assert m_basic.n_vars == sum(cfg.sizes[i] * cfg.sizes[j] for i, j in cfg.pairs())
    act = m_basic.matrix() @ vs.vectors.T.astype(float)
    assert (act <= m_basic.rhs[:, None] + 1e-12).all()


def test_perm_sync_vertices_feasible():
    cfg = ObjectConfig.uniform(3, 2)
    vs = enumerate_vertices(cfg)
    inst = complete_instance(cfg, {p: np.eye(2, dtype=int) for p in cfg.pairs()})
    m = build_perm_sync_lp(inst)
    n_perm = 0
    for k in range(len(vs)):
        x = vs.vectors[k].astype(float)
        S = vs.maps(k)
        is_perm = all((S.block(i, j).sum(0) == 1).all() and (S.block(i, j).sum(1) == 1).all() for i, j in cfg.pairs())
        assert feasible(m, x) == is_perm
        n_perm += is_perm
    assert n_perm == 2 ** 2  # consistent permutation collections: X(1,2), X(1,3) free, X(2,3) forced


@pytest.mark.parametrize("seed", range(8))
def test_perm_sync_optimum_not_below_basic(seed):
    inst = generate(CorruptionParams(5, 3, 0.4, seed=seed))
    a = solve(build_perm_sync_lp(inst))
    b = solve(build_jom_basic_lp(inst))
    assert a.objective >= b.objective - 1e-7


@pytest.mark.parametrize("seed", range(6))
def test_lp_below_ilp_oracle(seed):
    inst = generate(CorruptionParams(4, 2, 0.3, seed=seed))
    lp = solve(build_perm_sync_lp(inst)).objective
    basic = solve(build_jom_basic_lp(inst)).objective
    assert basic <= ilp_oracle(inst).optimum + 1e-7
    assert lp >= basic - 1e-7


def test_attach_example_cut_makes_point_infeasible():
    S = frac_maps(C32, POINTS["ex1"])
    inst = Instance(C32, frozenset(), {})
    m = build_jom_basic_lp(inst)
    x = m.var_index.to_vector(S, dtype=float)
    assert feasible(m, x)
    cut = ConsistencyCut((0, 1, 2), "pivot-in-i", 0, {0, 1}, {1})
    assert evaluate(cut, S) == pytest.approx(1.5)
    m2 = attach_cuts(m, [cut])
    assert m2.n_rows == m.n_rows + 1
    assert not feasible(m2, x)
    # idempotent attach and the empty attach
    assert attach_cuts(m2, [cut]).n_rows == m2.n_rows
    m3 = attach_cuts(m, [])
    assert m3.n_rows == m.n_rows and np.array_equal(m3.c, m.c)
    assert (m3.matrix() != m.matrix()).nnz == 0


def test_triangle_cut_key_matches_model_row():
    # |D1| = |D2| = 1 consistency cuts are exactly the triangle rows
    inst = Instance(C32, frozenset(), {})
    m = build_jom_basic_lp(inst)
    vi = m.var_index
    A = m.matrix().toarray()
    rows = {tuple(np.round(A[r], 12)) for r in range(A.shape[0])}
    for o in range(3):
        for l in range(2):
            for t in range(2):
                for q in range(2):
                    cut = ConsistencyCut((0, 1, 2), o, l, {t}, {q})
                    idx, vals, _, _ = cut.row(vi)
                    v = np.zeros(vi.size)
                    v[idx] = vals
                    assert tuple(v) in rows
    assert attach_cuts(m, [ConsistencyCut((0, 1, 2), 0, 0, {0}, {0})]).n_rows == m.n_rows + 1


@pytest.mark.parametrize("seed", range(4))
def test_lazy_and_full_models_agree(seed):
    from jomatch.driver import solve_model
    inst = generate(CorruptionParams(7, 3, 0.4, seed=seed))
    full = solve(build_perm_sync_lp(inst, lazy=False))
    lazy_model = build_perm_sync_lp(inst, lazy=True)
    lazy, rounds = solve_model(lazy_model)
    assert lazy.objective == pytest.approx(full.objective, abs=1e-7)
    assert rounds >= 1
    assert not list(violated_triangles(lazy_model.var_index, lazy.x))


def test_violated_triangles_mixed_sizes():
    cfg = ObjectConfig(3, (1, 2, 2))
    vi = VarIndex(cfg)
    x = np.zeros(vi.size)
    S = SolutionMaps.from_pairs(cfg, {(1, 2): [[1, 0]], (1, 3): [[0, 1]], (2, 3): [[0, 0], [0, 0]]})
    x = vi.to_vector(S)
    hits = list(violated_triangles(vi, x))
    assert [h[0] for h in hits] == [("tri", 0, 1, 2, 1, 0, 0, 1)]
