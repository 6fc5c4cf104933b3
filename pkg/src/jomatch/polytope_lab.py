"""Exact desk-scale polyhedral tools for the joint matching polytope.

Vertices are enumerated as partitions of the element set into blocks holding
at most one element per object.  A block of size one means "unmatched"; the
universe labeling gives each larger block a label ``1, 2, ...`` by first
occurrence and every singleton the label 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from math import gcd
from typing import Iterable, Sequence

import numpy as np

from .cuts import BlockCut, ConsistencyCut, SizeCut, roles
from .instance import (Instance, ObjectConfig, SolutionMaps, labels_to_maps, linear_objective,
                       validate_labeling)
from .lp_core import LpModel, solve
from .relaxation import TRIANGLE_SIGNS, VarIndex, triangle_ids

MAX_ELEMENTS = 12
ORACLE_MAX_ELEMENTS = 10


class SizeGuardError(ValueError):
    pass


def _guard(config: ObjectConfig, limit: int = MAX_ELEMENTS) -> None:
    if config.total > limit:
        raise SizeGuardError(f"{config.total} elements exceed the enumeration guard of {limit}")


def elements(config: ObjectConfig) -> list[tuple[int, int]]:
    return [(i, t) for i in range(config.n) for t in range(config.sizes[i])]


# ---------------------------------------------------------------------------
# labelings


def canonical_labels(config: ObjectConfig, block_of: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    """Labeling from a block id per element (element order as :func:`elements`)."""
    counts: dict[int, int] = {}
    for b in block_of:
        counts[b] = counts.get(b, 0) + 1
    relabel: dict[int, int] = {}
    flat = []
    for b in block_of:
        if counts[b] == 1:
            flat.append(0)
        else:
            if b not in relabel:
                relabel[b] = len(relabel) + 1
            flat.append(relabel[b])
    out, pos = [], 0
    for d in config.sizes:
        out.append(tuple(flat[pos:pos + d]))
        pos += d
    return tuple(out)


def enumerate_labelings(config: ObjectConfig) -> list[tuple[tuple[int, ...], ...]]:
    """All canonical labelings, one per cycle-consistent collection of partial maps."""
    _guard(config)
    elems = elements(config)
    out = []
    block_of: list[int] = []
    members: list[set[int]] = []  # objects present in each block

    def rec(pos: int):
        if pos == len(elems):
            out.append(canonical_labels(config, block_of))
            return
        obj = elems[pos][0]
        for b, objs in enumerate(members):
            if obj not in objs:
                objs.add(obj)
                block_of.append(b)
                rec(pos + 1)
                block_of.pop()
                objs.discard(obj)
        members.append({obj})
        block_of.append(len(members) - 1)
        rec(pos + 1)
        block_of.pop()
        members.pop()

    rec(0)
    return out


def labeling_to_vector(vi: VarIndex, labels) -> np.ndarray:
    x = np.zeros(vi.size, dtype=np.int64)
    cfg = vi.config
    for i, j in cfg.pairs():
        li = np.asarray(labels[i])[:, None]
        lj = np.asarray(labels[j])[None, :]
        x[vi.block_ids(i, j).ravel()] = ((li == lj) & (li != 0)).ravel()
    return x


def reconstruct_labeling(S: SolutionMaps):
    """Labeling that induces the binary maps ``S``, or ``None`` if none exists.

    Matched pairs are merged with union-find; ``S`` is consistent exactly
    when every component has at most one element per object and all of its
    pairs are matched.
    """
    cfg = S.config
    elems = elements(cfg)
    pos = {e: k for k, e in enumerate(elems)}
    parent = list(range(len(elems)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in cfg.pairs():
        blk = np.asarray(S.block(i, j))
        for t, q in zip(*np.nonzero(blk)):
            ra, rb = find(pos[(i, int(t))]), find(pos[(j, int(q))])
            if ra != rb:
                parent[rb] = ra
    block_of = [find(k) for k in range(len(elems))]
    comps: dict[int, list[tuple[int, int]]] = {}
    for k, b in enumerate(block_of):
        comps.setdefault(b, []).append(elems[k])
    for members in comps.values():
        objs = [o for o, _ in members]
        if len(objs) != len(set(objs)):
            return None
        for (a, s), (b, t) in combinations(members, 2):
            if S.block(a, b)[s, t] != 1:
                return None
    labels = canonical_labels(cfg, block_of)
    return labels


def universe_size(labels) -> int:
    """Number of universe items a labeling uses (blocks, singletons included)."""
    nz = {v for row in labels for v in row if v}
    return len(nz) + sum(1 for row in labels for v in row if v == 0)


# ---------------------------------------------------------------------------
# vertex sets


@dataclass
class VertexSet:
    config: ObjectConfig
    vectors: np.ndarray
    labelings: list

    def __len__(self):
        return len(self.vectors)

    def maps(self, k: int) -> SolutionMaps:
        return labels_to_maps(self.config, self.labelings[k])


def enumerate_vertices(config: ObjectConfig) -> VertexSet:
    labs = enumerate_labelings(config)
    vi = VarIndex(config)
    vecs = np.array([labeling_to_vector(vi, l) for l in labs], dtype=np.int64).reshape(len(labs), vi.size)
    return VertexSet(config, vecs, labs)


def _partial_maps(r: int, c: int) -> np.ndarray:
    """Every ``r x c`` binary matrix with row and column sums at most one, flattened."""
    out = []
    for bits in product((0, 1), repeat=r * c):
        M = np.array(bits).reshape(r, c)
        if (M.sum(axis=0) <= 1).all() and (M.sum(axis=1) <= 1).all():
            out.append(bits)
    return np.array(out, dtype=np.int64).reshape(-1, r * c)


def enumerate_vertices_bruteforce(config: ObjectConfig, limit: int = 8) -> np.ndarray:
    """Independent enumerator: all partial-map tuples filtered by the triangle rows."""
    _guard(config, limit)
    vi = VarIndex(config)
    pairs = list(config.pairs())
    pools = [_partial_maps(*config.shape(i, j)) for i, j in pairs]
    X = np.zeros((1, 0), dtype=np.int64)
    for pool in pools:
        X = np.concatenate([np.repeat(X, len(pool), axis=0), np.tile(pool, (len(X), 1))], axis=1)
    keep = np.ones(len(X), dtype=bool)
    for i, j, k in config.triples():
        a, b, c = triangle_ids(vi, i, j, k)
        for f in range(3):
            s = TRIANGLE_SIGNS[f].astype(np.int64)
            lhs = s[0] * X[:, a] + s[1] * X[:, b] + s[2] * X[:, c]
            keep &= (lhs <= 1).all(axis=1)
    return X[keep]


# ---------------------------------------------------------------------------
# exact rank


class IntegerEchelon:
    """Incremental row echelon form over the integers (fraction-free, gcd-normalized)."""

    def __init__(self, width: int):
        self.width = width
        self.rows: dict[int, list[int]] = {}

    @property
    def rank(self) -> int:
        return len(self.rows)

    def add(self, vec: Iterable[int]) -> bool:
        v = [int(x) for x in vec]
        for c in sorted(self.rows):
            if v[c]:
                r = self.rows[c]
                f, g = r[c], v[c]
                v = [f * x - g * y for x, y in zip(v, r)]
                v = _normalize(v)
        nz = next((c for c, x in enumerate(v) if x), None)
        if nz is None:
            return False
        if v[nz] < 0:
            v = [-x for x in v]
        self.rows[nz] = v
        return True


def _normalize(v: list[int]) -> list[int]:
    g = 0
    for x in v:
        if x:
            g = gcd(g, x)
            if g == 1:
                return v
    return [x // g for x in v] if g > 1 else v


def affine_rank(points: np.ndarray, cap: int | None = None) -> int:
    """Dimension of the affine hull of integer ``points``; -1 for an empty set."""
    points = np.asarray(points)
    if len(points) == 0:
        return -1
    base = points[0].astype(object)
    ech = IntegerEchelon(points.shape[1])
    cap = points.shape[1] if cap is None else cap
    for p in points[1:]:
        diff = p.astype(object) - base
        if any(diff):
            ech.add(diff)
            if ech.rank >= cap:
                break
    return ech.rank


def dimension(config: ObjectConfig, vertices: VertexSet | None = None) -> int:
    vs = vertices if vertices is not None else enumerate_vertices(config)
    return affine_rank(vs.vectors)


# ---------------------------------------------------------------------------
# inequalities


@dataclass(frozen=True)
class Inequality:
    """``coef . x <= rhs`` over VarIndex columns, integer data."""

    name: str
    coef: tuple
    rhs: int
    family: str = ""
    facet_grade: bool = True

    def vector(self, size: int) -> np.ndarray:
        v = np.zeros(size, dtype=np.int64)
        for j, c in self.coef:
            v[j] += c
        return v


@dataclass
class FacetReport:
    valid: bool
    tight_count: int
    tight_rank: int
    dim: int
    is_facet: bool
    max_lhs: int


def inequality_from_cut(cut, vi: VarIndex, name: str | None = None) -> Inequality:
    terms = [(vi.index(*var), c) for var, c in cut.terms()]
    if isinstance(cut, SizeCut):
        return Inequality(name or "size", tuple((j, -c) for j, c in terms), -1, "size")
    fam = "block" if isinstance(cut, BlockCut) else "consistency"
    grade = cut.facet_grade if isinstance(cut, BlockCut) else True
    return Inequality(name or _cut_name(cut), tuple(terms), int(cut.rhs), fam, grade)


def _cut_name(cut) -> str:
    tri = ",".join(str(v + 1) for v in cut.triple)
    d = lambda s: "{" + ",".join(str(v + 1) for v in sorted(s)) + "}"
    o = ("k", "i", "j")[cut.orientation]
    if isinstance(cut, ConsistencyCut):
        return f"consistency({tri}) pivot-{o} l={cut.pivot + 1} D1={d(cut.D1)} D2={d(cut.D2)}"
    return f"block({tri}) pivot-{o} D1={d(cut.D1)} D2={d(cut.D2)} D3={d(cut.D3)}"


def _nonempty_subsets(m: int):
    for r in range(1, m + 1):
        yield from combinations(range(m), r)


def family_inequalities(config: ObjectConfig, family: str, m_hat: int | None = None) -> list[Inequality]:
    """Every member of one inequality family on ``config``."""
    vi = VarIndex(config)
    out: list[Inequality] = []
    if family == "nonneg":
        for i, j in config.pairs():
            di, dj = config.shape(i, j)
            for t in range(di):
                for q in range(dj):
                    out.append(Inequality(f"X_{t + 1}{q + 1}({i + 1},{j + 1}) >= 0",
                                          ((vi.index(i, j, t, q), -1),), 0, "nonneg"))
    elif family == "rowsum":
        for i, j in config.pairs():
            ids = vi.block_ids(i, j)
            for t in range(ids.shape[0]):
                out.append(Inequality(f"row {t + 1} of X({i + 1},{j + 1}) <= 1",
                                      tuple((int(c), 1) for c in ids[t]), 1, "rowsum"))
            for q in range(ids.shape[1]):
                out.append(Inequality(f"col {q + 1} of X({i + 1},{j + 1}) <= 1",
                                      tuple((int(c), 1) for c in ids[:, q]), 1, "rowsum"))
    elif family in ("consistency", "block"):
        for tri in config.triples():
            for o in range(3):
                u, v, p = roles(tri, o)
                for D1 in _nonempty_subsets(config.sizes[u]):
                    for D2 in _nonempty_subsets(config.sizes[v]):
                        if family == "consistency":
                            for l in range(config.sizes[p]):
                                out.append(inequality_from_cut(ConsistencyCut(tri, o, l, D1, D2), vi))
                        else:
                            for D3 in _nonempty_subsets(config.sizes[p]):
                                if len(D3) > 1:
                                    out.append(inequality_from_cut(BlockCut(tri, o, D1, D2, D3), vi))
    elif family == "size":
        hats = [m_hat] if m_hat is not None else range(config.d_max, config.total)
        for mh in hats:
            for Np in combinations(elements(config), mh + 1):
                cut = SizeCut(frozenset(Np), mh)
                cut.check(config)
                names = ",".join(f"{a + 1}_{b + 1}" for a, b in sorted(Np))
                ineq = inequality_from_cut(cut, vi, f"size m={mh} N'={{{names}}}")
                out.append(Inequality(ineq.name, ineq.coef, ineq.rhs, "size", True))
    else:
        raise ValueError(f"unknown family {family!r}")
    return out


def verify_facet(ineq: Inequality, config: ObjectConfig, vertices: VertexSet | None = None,
                 dim: int | None = None) -> FacetReport:
    vs = vertices if vertices is not None else enumerate_vertices(config)
    if dim is None:
        dim = dimension(config, vs)
    lhs = vs.vectors @ ineq.vector(vs.vectors.shape[1])
    valid = bool((lhs <= ineq.rhs).all())
    tight = vs.vectors[lhs == ineq.rhs]
    rank = affine_rank(tight)
    return FacetReport(valid, int(len(tight)), rank, dim, valid and rank == dim - 1, int(lhs.max()))


def size_cut_vertices(vs: VertexSet, m_hat: int) -> np.ndarray:
    """Vertices whose labeling fits a universe of ``m_hat`` items."""
    keep = [universe_size(l) <= m_hat for l in vs.labelings]
    return vs.vectors[np.array(keep, dtype=bool)]


# ---------------------------------------------------------------------------
# hull membership


@dataclass
class HullResult:
    inside: bool
    weights: np.ndarray | None = None
    pi: tuple | None = None
    pi0: Fraction | None = None
    point_value: Fraction | None = None

    @property
    def violation(self):
        return None if self.inside else self.point_value - self.pi0


def _exact(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(float(v)).limit_denominator(10**6)


def hull_membership(point, config: ObjectConfig, vertices: VertexSet | None = None,
                    backend: str | None = None) -> HullResult:
    """Decide whether ``point`` lies in the convex hull of the vertices.

    Outside points get a hyperplane ``pi . x <= pi0`` valid for every vertex and
    violated by the point, checked in exact rational arithmetic.
    """
    vs = vertices if vertices is not None else enumerate_vertices(config)
    vi = VarIndex(config)
    x = point if not isinstance(point, SolutionMaps) else vi.to_vector(point, dtype=object)
    x_exact = [_exact(v) for v in x]
    xf = np.array([float(v) for v in x_exact])
    V = vs.vectors
    nv, D = V.shape
    # feasibility: sum w = 1, V^T w = x, w >= 0
    m = LpModel("hull")
    m.add_variables(nv, 0.0, np.inf, 0.0)
    A = np.vstack([np.ones(nv), V.T.astype(float)])
    rows = [np.flatnonzero(A[r]) for r in range(A.shape[0])]
    ptr = np.cumsum([0] + [len(r) for r in rows])
    m.add_rows(ptr, np.concatenate(rows), np.concatenate([A[r, idx] for r, idx in enumerate(rows)]),
               "=", np.concatenate([[1.0], xf]))
    sol = solve(m, backend=backend)
    if sol.optimal:
        return HullResult(True, weights=sol.x)
    # separation: max pi.x - pi0  s.t.  pi.v <= pi0 for all v, -1 <= pi <= 1
    sep = LpModel("hull_sep")
    sep.add_variables(D, -1.0, 1.0, -xf)
    sep.add_variables(1, -np.inf, np.inf, 1.0)
    ptr = np.arange(0, nv * (D + 1) + 1, D + 1)
    ind = np.tile(np.arange(D + 1), nv)
    dat = np.hstack([V.astype(float), -np.ones((nv, 1))]).ravel()
    sep.add_rows(ptr, ind, dat, "<=", 0.0)
    s2 = solve(sep, backend=backend)
    if not s2.optimal or -s2.objective <= 1e-9:
        raise RuntimeError("hull LP infeasible but no separating hyperplane found")
    for den in (1, 2, 3, 4, 6, 8, 12, 24, 10**3, 10**6):
        pi = tuple(Fraction(float(v)).limit_denominator(den) for v in s2.x[:D])
        pi0 = max(sum(p * int(v) for p, v in zip(pi, row) if v) for row in V)
        val = sum(p * xv for p, xv in zip(pi, x_exact))
        if val > pi0:
            return HullResult(False, pi=pi, pi0=pi0, point_value=val)
    raise RuntimeError("could not certify the separating hyperplane exactly")


# ---------------------------------------------------------------------------
# ILP oracle


@dataclass
class OracleResult:
    optimum: int
    argmin: list
    vertex_count: int

    @property
    def unique(self) -> bool:
        return len(self.argmin) == 1


def ilp_oracle(inst: Instance, vertices: VertexSet | None = None) -> OracleResult:
    """Exact minimum of the linear objective over every consistent collection."""
    _guard(inst.config, ORACLE_MAX_ELEMENTS)
    vs = vertices if vertices is not None else enumerate_vertices(inst.config)
    vi = VarIndex(inst.config)
    c = vi.cost_vector(inst).astype(np.int64)
    vals = vs.vectors @ c
    best = int(vals.min())
    arg = [vs.maps(k) for k in np.flatnonzero(vals == best)]
    return OracleResult(best, arg, len(vs))


def check_oracle_value(inst: Instance, res: OracleResult) -> bool:
    return all(linear_objective(inst, S) == res.optimum for S in res.argmin)


__all__ = [
    "enumerate_labelings", "enumerate_vertices", "enumerate_vertices_bruteforce", "reconstruct_labeling",
    "dimension", "affine_rank", "verify_facet", "family_inequalities", "hull_membership", "ilp_oracle",
    "Inequality", "FacetReport", "HullResult", "OracleResult", "VertexSet", "SizeGuardError",
    "validate_labeling", "universe_size", "size_cut_vertices", "inequality_from_cut",
]
