"""Consistency, block-consistency and size inequalities, with exact separation.

Every consistency-type cut on a triple ``i < j < k`` is written around a pivot
object ``p`` and two other objects ``u < v``::

    sum_{t in D1, l in D3} X(u,p)[t,l] + sum_{q in D2, l in D3} X(v,p)[q,l]
        - sum_{t in D1, q in D2} X(u,v)[t,q]  <=  |D3|

The orientation picks the pivot: ``pivot-in-k`` (u,v = i,j), ``pivot-in-i``
(u,v = j,k) or ``pivot-in-j`` (u,v = i,k).  With ``|D1| = |D2| = |D3| = 1``
these are the triangle rows, orientation ``o`` matching triangle family ``o``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .instance import ObjectConfig, SolutionMaps
from .lp_core import LpModel, solve

VIOL_TOL = 1e-6
ORIENTATIONS = ("pivot-in-k", "pivot-in-i", "pivot-in-j")


class CutError(ValueError):
    pass


def roles(triple: tuple[int, int, int], orientation: int) -> tuple[int, int, int]:
    """``(u, v, p)``: the two non-pivot objects and the pivot object."""
    i, j, k = triple
    return ((i, j, k), (j, k, i), (i, k, j))[orientation]


def _orientation(o) -> int:
    if isinstance(o, str):
        return ORIENTATIONS.index(o)
    if o not in (0, 1, 2):
        raise CutError(f"orientation must be 0, 1 or 2, got {o!r}")
    return int(o)


def _pair_term(a: int, b: int, s: int, t: int):
    return (a, b, s, t) if a < b else (b, a, t, s)


@dataclass(frozen=True)
class BlockCut:
    triple: tuple[int, int, int]
    orientation: int
    D1: frozenset
    D2: frozenset
    D3: frozenset

    def __post_init__(self):
        object.__setattr__(self, "triple", tuple(int(v) for v in self.triple))
        object.__setattr__(self, "orientation", _orientation(self.orientation))
        for name in ("D1", "D2", "D3"):
            object.__setattr__(self, name, frozenset(int(v) for v in getattr(self, name)))
            if not getattr(self, name):
                raise CutError(f"{name} must be non-empty")
        i, j, k = self.triple
        if not i < j < k:
            raise CutError(f"triple must be increasing, got {self.triple}")

    @property
    def rhs(self) -> int:
        return len(self.D3)

    @property
    def facet_grade(self) -> bool:
        return len(self.D1) + len(self.D2) > len(self.D3)

    def check(self, config: ObjectConfig) -> None:
        if self.triple[2] >= config.n:
            raise CutError(f"triple {self.triple} out of range for n={config.n}")
        u, v, p = roles(self.triple, self.orientation)
        for D, obj, name in ((self.D1, u, "D1"), (self.D2, v, "D2"), (self.D3, p, "D3")):
            if min(D) < 0 or max(D) >= config.sizes[obj]:
                raise CutError(f"{name}={sorted(D)} out of range for object {obj} of size {config.sizes[obj]}")

    def terms(self) -> list[tuple[tuple[int, int, int, int], int]]:
        """Signed coefficient list keyed by normalized ``(i, j, t, q)`` with ``i < j``."""
        u, v, p = roles(self.triple, self.orientation)
        out = []
        for t in sorted(self.D1):
            for l in sorted(self.D3):
                out.append((_pair_term(u, p, t, l), 1))
        for q in sorted(self.D2):
            for l in sorted(self.D3):
                out.append((_pair_term(v, p, q, l), 1))
        for t in sorted(self.D1):
            for q in sorted(self.D2):
                out.append((_pair_term(u, v, t, q), -1))
        return out

    def key(self):
        return ("le", tuple(sorted(self.terms())), self.rhs)

    def row(self, vi):
        terms = self.terms()
        idx = [vi.index(*var) for var, _ in terms]
        return idx, [float(c) for _, c in terms], "<=", float(self.rhs)

    def to_json(self) -> dict:
        return {"type": "block", "triple": [v + 1 for v in self.triple],
                "orientation": ORIENTATIONS[self.orientation],
                "D1": sorted(v + 1 for v in self.D1), "D2": sorted(v + 1 for v in self.D2),
                "D3": sorted(v + 1 for v in self.D3)}


@dataclass(frozen=True)
class ConsistencyCut:
    triple: tuple[int, int, int]
    orientation: int
    pivot: int
    D1: frozenset
    D2: frozenset

    def __post_init__(self):
        object.__setattr__(self, "triple", tuple(int(v) for v in self.triple))
        object.__setattr__(self, "orientation", _orientation(self.orientation))
        object.__setattr__(self, "pivot", int(self.pivot))
        for name in ("D1", "D2"):
            object.__setattr__(self, name, frozenset(int(v) for v in getattr(self, name)))
            if not getattr(self, name):
                raise CutError(f"{name} must be non-empty")
        i, j, k = self.triple
        if not i < j < k:
            raise CutError(f"triple must be increasing, got {self.triple}")

    rhs = 1

    def as_block(self) -> BlockCut:
        return BlockCut(self.triple, self.orientation, self.D1, self.D2, frozenset([self.pivot]))

    def check(self, config: ObjectConfig) -> None:
        self.as_block().check(config)

    def terms(self):
        return self.as_block().terms()

    def key(self):
        return self.as_block().key()

    def row(self, vi):
        return self.as_block().row(vi)

    def to_json(self) -> dict:
        return {"type": "consistency", "triple": [v + 1 for v in self.triple],
                "orientation": ORIENTATIONS[self.orientation], "pivot": self.pivot + 1,
                "D1": sorted(v + 1 for v in self.D1), "D2": sorted(v + 1 for v in self.D2)}


@dataclass(frozen=True)
class SizeCut:
    """At least one matched pair among ``m_hat + 1`` elements; elements are ``(object, index)``."""

    elements: frozenset
    m_hat: int

    def __post_init__(self):
        object.__setattr__(self, "elements", frozenset((int(a), int(b)) for a, b in self.elements))
        if len(self.elements) != self.m_hat + 1:
            raise CutError(f"size cut needs |N'| = m_hat + 1 = {self.m_hat + 1}, got {len(self.elements)}")

    rhs = 1

    def check(self, config: ObjectConfig) -> None:
        if not config.d_max <= self.m_hat <= config.total - 1:
            raise CutError(f"m_hat={self.m_hat} outside [{config.d_max}, {config.total - 1}]")
        for obj, e in self.elements:
            if not (0 <= obj < config.n and 0 <= e < config.sizes[obj]):
                raise CutError(f"element ({obj + 1},{e + 1}) out of range")

    def terms(self):
        out = []
        for (a, s), (b, t) in combinations(sorted(self.elements), 2):
            if a != b:
                out.append((_pair_term(a, b, s, t), 1))
        return out

    def key(self):
        return ("ge", tuple(sorted(self.terms())), 1)

    def row(self, vi):
        terms = self.terms()
        return [vi.index(*var) for var, _ in terms], [1.0] * len(terms), ">=", 1.0

    def to_json(self) -> dict:
        return {"type": "size", "N'": [[a + 1, b + 1] for a, b in sorted(self.elements)], "m_hat": self.m_hat}


def make_size_cut(elements: Iterable[tuple[int, int]], m_hat: int, config: ObjectConfig | None = None) -> SizeCut:
    cut = SizeCut(frozenset(elements), m_hat)
    if config is not None:
        cut.check(config)
    return cut


Cut = ConsistencyCut | BlockCut | SizeCut


def evaluate(cut, S: SolutionMaps):
    """Left-hand side of ``cut`` at ``S``; exact for integer or Fraction entries."""
    cut.check(S.config)
    total = 0
    for (i, j, t, q), c in cut.terms():
        v = S.block(i, j)[t, q]
        total += c * (v if isinstance(v, Fraction) else v.item() if hasattr(v, "item") else v)
    return total


def is_violated(cut, S: SolutionMaps, tol: float = VIOL_TOL) -> bool:
    lhs = evaluate(cut, S)
    if isinstance(cut, SizeCut):
        return lhs < 1 - tol
    return lhs > cut.rhs + tol


def size_cut_valid_on(cut: SizeCut, vertex: SolutionMaps) -> bool:
    return evaluate(cut, vertex) >= 1


# ---------------------------------------------------------------------------
# separation


def cell_data(S: SolutionMaps, triple, orientation: int, pivot: int):
    """Linear weights ``a``, ``b`` and pair weights ``W`` of the bilinear separation objective."""
    u, v, p = roles(tuple(triple), _orientation(orientation))
    a = S.block(u, p)[:, pivot]
    b = S.block(v, p)[:, pivot]
    W = S.block(u, v)
    return a, b, W


def _as_number(v):
    if isinstance(v, (Fraction, int)):
        return v
    if isinstance(v, np.integer):
        return int(v)
    return float(v)


def max_flow_min_cut(cap: list[list], s: int, t: int):
    """Edmonds-Karp on a dense capacity matrix.

    Works over any ordered field the entries live in (int, Fraction, float).
    Returns the flow value and the minimal source side (nodes reachable from
    ``s`` in the final residual graph).
    """
    n = len(cap)
    res = [row[:] for row in cap]
    flow = 0
    zero = 0
    while True:
        parent = [-1] * n
        parent[s] = s
        dq = deque([s])
        while dq and parent[t] < 0:
            x = dq.popleft()
            row = res[x]
            for y in range(n):
                if parent[y] < 0 and row[y] > zero:
                    parent[y] = x
                    dq.append(y)
        if parent[t] < 0:
            break
        push = None
        y = t
        while y != s:
            x = parent[y]
            push = res[x][y] if push is None or res[x][y] < push else push
            y = x
        y = t
        while y != s:
            x = parent[y]
            res[x][y] -= push
            res[y][x] += push
            y = x
        flow += push
    side = [False] * n
    side[s] = True
    dq = deque([s])
    while dq:
        x = dq.popleft()
        for y in range(n):
            if not side[y] and res[x][y] > zero:
                side[y] = True
                dq.append(y)
    return flow, side


def maximize_bilinear(a: Sequence, b: Sequence, W) -> tuple[object, frozenset, frozenset]:
    """Maximize ``sum a_t y_t + sum b_q z_q - sum W_tq y_t z_q`` over binary ``y, z``.

    Requires ``a, b, W >= 0``.  The objective is supermodular in ``(y, 1-z)``;
    with arcs ``s -> y_t`` (a_t), ``y_t -> z_q`` (W_tq), ``z_q -> sink`` (b_q)
    a cut with source side ``Y`` costs ``sum a + sum b - f(y, z)`` where
    ``y_t = [t in Y]`` and ``z_q = [q not in Y]``.
    """
    a = [_as_number(v) for v in a]
    b = [_as_number(v) for v in b]
    W = [[_as_number(v) for v in row] for row in np.asarray(W, dtype=object)]
    du, dv = len(a), len(b)
    if any(v < 0 for v in a) or any(v < 0 for v in b) or any(v < 0 for row in W for v in row):
        raise CutError("separation needs nonnegative data")
    N = du + dv + 2
    s, t = 0, N - 1
    cap = [[0] * N for _ in range(N)]
    for x in range(du):
        cap[s][1 + x] = a[x]
        for y in range(dv):
            cap[1 + x][1 + du + y] = W[x][y]
    for y in range(dv):
        cap[1 + du + y][t] = b[y]
    flow, side = max_flow_min_cut(cap, s, t)
    D1 = frozenset(x for x in range(du) if side[1 + x])
    D2 = frozenset(y for y in range(dv) if not side[1 + du + y])
    return sum(a) + sum(b) - flow, D1, D2


def bilinear_value(a, b, W, D1, D2):
    return (sum(a[t] for t in D1) + sum(b[q] for q in D2)
            - sum(W[t][q] for t in D1 for q in D2))


def brute_force_bilinear(a, b, W) -> tuple[object, frozenset, frozenset]:
    """Exhaustive maximum of the separation objective over all subset pairs (incl. empty)."""
    best = (0, frozenset(), frozenset())
    du, dv = len(a), len(b)
    Wl = np.asarray(W, dtype=object)
    for m1 in range(1 << du):
        D1 = frozenset(t for t in range(du) if m1 >> t & 1)
        for m2 in range(1 << dv):
            D2 = frozenset(q for q in range(dv) if m2 >> q & 1)
            val = bilinear_value(a, b, Wl, D1, D2)
            if val > best[0]:
                best = (val, D1, D2)
    return best


@dataclass
class SeparationResult:
    value: object
    D1: frozenset
    D2: frozenset
    cut: ConsistencyCut | None


def _drop_idle(a, b, W, D1, D2):
    """Remove members whose marginal contribution is zero; the value is unchanged."""
    D2 = frozenset(q for q in D2 if b[q] - sum(W[t, q] for t in D1) > 0)
    D1 = frozenset(t for t in D1 if a[t] - sum(W[t, q] for q in D2) > 0)
    return D1, D2


def _precondition(a, b, W, tol: float):
    for arr in (a, b, W):
        arr = np.asarray(arr, dtype=float)
        if arr.size and arr.min() < -tol:
            raise CutError(f"negative entry {arr.min():.3g} in separation data")


def _clip(arr):
    arr = np.asarray(arr)
    if arr.dtype == object:
        return np.array([[max(v, 0) for v in row] for row in np.atleast_2d(arr)], dtype=object).reshape(arr.shape)
    return np.maximum(arr, 0)


def separate_consistency(S: SolutionMaps, triple, orientation, pivot: int,
                         tol: float = VIOL_TOL) -> SeparationResult:
    """Most violated consistency inequality of one (triple, orientation, pivot) cell."""
    o = _orientation(orientation)
    a, b, W = cell_data(S, triple, o, pivot)
    _precondition(a, b, W, VIOL_TOL)
    a, b, W = _clip(a), _clip(b), _clip(W)
    value, D1, D2 = maximize_bilinear(a, b, W)
    D1, D2 = _drop_idle(a, b, W, D1, D2)
    cut = None
    if D1 and D2 and value > 1 + tol:
        cut = ConsistencyCut(tuple(triple), o, pivot, D1, D2)
    return SeparationResult(value, D1, D2, cut)


def separation_lp(a, b, W) -> LpModel:
    """LP with ``w_tq >= y_t + z_q - 1``, ``w >= 0``, ``0 <= y, z <= 1``; minimizes the negated objective."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    W = np.asarray(W, dtype=float)
    du, dv = len(a), len(b)
    m = LpModel("separate")
    m.add_variables(du, 0.0, 1.0, -a, names=[f"y{t}" for t in range(du)])
    m.add_variables(dv, 0.0, 1.0, -b, names=[f"z{q}" for q in range(dv)])
    m.add_variables(du * dv, 0.0, np.inf, W.ravel(), names=[f"w{t}_{q}" for t in range(du) for q in range(dv)])
    ptr = np.arange(0, 3 * du * dv + 1, 3)
    ind = np.array([[du + dv + t * dv + q, t, du + q] for t in range(du) for q in range(dv)]).ravel()
    dat = np.tile([1.0, -1.0, -1.0], du * dv)
    m.add_rows(ptr, ind, dat, ">=", -1.0)
    return m


def separate_via_lp(S: SolutionMaps, triple, orientation, pivot: int, tol: float = VIOL_TOL,
                    backend: str | None = None) -> SeparationResult:
    o = _orientation(orientation)
    a, b, W = cell_data(S, triple, o, pivot)
    _precondition(a, b, W, VIOL_TOL)
    model = separation_lp(a, b, W)
    sol = solve(model, backend=backend)
    if not sol.optimal:
        raise CutError(f"separation LP ended with status {sol.status}")
    du, dv = len(a), len(b)
    y, z = sol.x[:du], sol.x[du:du + dv]
    D1 = frozenset(np.flatnonzero(y > 0.5).tolist())
    D2 = frozenset(np.flatnonzero(z > 0.5).tolist())
    value = -sol.objective
    cut = ConsistencyCut(tuple(triple), o, pivot, D1, D2) if D1 and D2 and value > 1 + tol else None
    res = SeparationResult(value, D1, D2, cut)
    res.y, res.z = y, z
    return res


def _cells(config: ObjectConfig):
    for tri in config.triples():
        for o in range(3):
            _, _, p = roles(tri, o)
            for l in range(config.sizes[p]):
                yield tri, o, l


def separate_all(S: SolutionMaps, limit: int = 1000, strategy: str = "first-k",
                 tol: float = VIOL_TOL) -> list[ConsistencyCut]:
    """Scan every (triple, orientation, pivot) cell in lexicographic order.

    ``first-k`` stops after ``limit`` distinct violated cuts; ``top-k`` scans
    everything and keeps the ``limit`` largest violations (ties by scan order).
    """
    if strategy not in ("first-k", "top-k"):
        raise ValueError(f"unknown strategy {strategy!r}")
    cfg = S.config
    colsum = {}
    for i, j in cfg.pairs():
        blk = np.asarray(S.block(i, j), dtype=float)
        colsum[(i, j)] = blk.sum(axis=0)
        colsum[(j, i)] = blk.sum(axis=1)
    found: dict = {}
    order = []
    for tri, o, l in _cells(cfg):
        u, v, p = roles(tri, o)
        if colsum[(u, p)][l] + colsum[(v, p)][l] <= 1 + tol:
            continue
        res = separate_consistency(S, tri, o, l, tol)
        if res.cut is None:
            continue
        key = res.cut.key()
        if key in found:
            continue
        found[key] = (res.value, res.cut)
        order.append(key)
        if strategy == "first-k" and len(order) >= limit:
            break
    if strategy == "top-k":
        ranked = sorted(range(len(order)), key=lambda r: -float(found[order[r]][0]))
        order = [order[r] for r in ranked[:limit]]
    return [found[k][1] for k in order]


# ---------------------------------------------------------------------------
# cut pool files


def cut_from_json(d: dict):
    kind = d.get("type")
    if kind == "consistency":
        return ConsistencyCut(tuple(v - 1 for v in d["triple"]), d["orientation"], d["pivot"] - 1,
                              frozenset(v - 1 for v in d["D1"]), frozenset(v - 1 for v in d["D2"]))
    if kind == "block":
        return BlockCut(tuple(v - 1 for v in d["triple"]), d["orientation"],
                        frozenset(v - 1 for v in d["D1"]), frozenset(v - 1 for v in d["D2"]),
                        frozenset(v - 1 for v in d["D3"]))
    if kind == "size":
        return SizeCut(frozenset((a - 1, b - 1) for a, b in d["N'"]), d["m_hat"])
    raise CutError(f"unknown cut type {kind!r}")


def write_cut_pool(cuts: Iterable, path) -> None:
    Path(path).write_text(json.dumps([c.to_json() for c in cuts], indent=1) + "\n")


def read_cut_pool(path) -> list:
    return [cut_from_json(d) for d in json.loads(Path(path).read_text())]
