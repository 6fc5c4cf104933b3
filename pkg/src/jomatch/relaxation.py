"""LP models over the pairwise map variables.

Triangle rows come in three families, indexed by which block carries the
minus sign for the triple ``i < j < k``::

    0:  -X_lt(i,j) + X_tq(j,k) + X_lq(i,k) <= 1
    1:   X_lt(i,j) - X_tq(j,k) + X_lq(i,k) <= 1
    2:   X_lt(i,j) + X_tq(j,k) - X_lq(i,k) <= 1
"""
from __future__ import annotations

import logging
from typing import Iterable, Iterator

import numpy as np

from .instance import Instance, MalformedInputError, ObjectConfig, SolutionMaps, cost_tensor
from .lp_core import LpModel

log = logging.getLogger(__name__)

TRIANGLE_CAP = 2_000_000
TRIANGLE_SIGNS = np.array([[-1, 1, 1], [1, -1, 1], [1, 1, -1]], dtype=float)


class ConfigurationError(ValueError):
    pass


class VarIndex:
    """Bijection between ``(i, j, t, q)`` with ``i < j`` and LP column ids.

    Pairs are laid out lexicographically, each block row-major.
    """

    def __init__(self, config: ObjectConfig):
        self.config = config
        self.offset: dict[tuple[int, int], int] = {}
        pos = 0
        for i, j in config.pairs():
            self.offset[(i, j)] = pos
            di, dj = config.shape(i, j)
            pos += di * dj
        self.size = pos

    def __len__(self):
        return self.size

    def index(self, i: int, j: int, t: int, q: int) -> int:
        if i > j:
            i, j, t, q = j, i, q, t
        di, dj = self.config.shape(i, j)
        if not (0 <= t < di and 0 <= q < dj):
            raise IndexError(f"element ({t}, {q}) out of range for pair ({i}, {j})")
        return self.offset[(i, j)] + t * dj + q

    def block_ids(self, i: int, j: int) -> np.ndarray:
        """Column ids of ``X(i, j)`` as a ``d_i x d_j`` array (transposed if ``i > j``)."""
        if i > j:
            return self.block_ids(j, i).T
        di, dj = self.config.shape(i, j)
        return self.offset[(i, j)] + np.arange(di * dj).reshape(di, dj)

    def key(self, col: int) -> tuple[int, int, int, int]:
        for (i, j), off in self.offset.items():
            di, dj = self.config.shape(i, j)
            if off <= col < off + di * dj:
                t, q = divmod(col - off, dj)
                return i, j, t, q
        raise IndexError(col)

    def names(self) -> list[str]:
        out = []
        for i, j in self.config.pairs():
            di, dj = self.config.shape(i, j)
            out += [f"X_{i + 1}_{j + 1}_{t + 1}_{q + 1}" for t in range(di) for q in range(dj)]
        return out

    def to_maps(self, x, check_box: bool = True) -> SolutionMaps:
        x = np.asarray(x)
        if x.shape != (self.size,):
            raise MalformedInputError(f"vector of length {x.shape} does not match {self.size} variables")
        return SolutionMaps(self.config, {p: x[self.block_ids(*p)] for p in self.config.pairs()},
                            check_box=check_box)

    def to_vector(self, S: SolutionMaps, dtype=float) -> np.ndarray:
        x = np.zeros(self.size, dtype=dtype)
        for p in self.config.pairs():
            x[self.block_ids(*p).ravel()] = np.asarray(S.block(*p), dtype=dtype).ravel()
        return x

    def cost_vector(self, inst: Instance) -> np.ndarray:
        a = cost_tensor(inst)
        c = np.zeros(self.size)
        for p in self.config.pairs():
            c[self.block_ids(*p).ravel()] = a.block(*p).ravel()
        return c

    # uniform-size helpers for vectorized triangle work
    def pair_table(self) -> np.ndarray:
        n = self.config.n
        pid = -np.ones((n, n), dtype=np.int64)
        for k, p in enumerate(self.config.pairs()):
            pid[p] = k
            pid[p[::-1]] = k
        return pid


class RelaxationModel(LpModel):
    """An :class:`LpModel` that remembers its variable layout and which rows it holds."""

    def __init__(self, name: str, var_index: VarIndex, kind: str):
        super().__init__(name)
        self.var_index = var_index
        self.kind = kind
        self.lazy_triangles = False
        self.keys: set = set()

    def add_keyed_rows(self, rows: Iterable[tuple[object, np.ndarray, np.ndarray, str, float]]) -> int:
        """Append ``(key, idx, vals, sense, rhs)`` rows whose key is new; returns how many were added."""
        ptr, ind, dat, sen, rhs, tags = [0], [], [], [], [], []
        for key, idx, vals, sense, b in rows:
            if key in self.keys:
                continue
            self.keys.add(key)
            ind.append(np.asarray(idx, dtype=np.int64))
            dat.append(np.asarray(vals, dtype=float))
            ptr.append(ptr[-1] + len(ind[-1]))
            sen.append(sense)
            rhs.append(b)
            tags.append(key)
        if tags:
            self.add_rows(np.array(ptr), np.concatenate(ind), np.concatenate(dat), sen, rhs, tags=tags)
        return len(tags)


def triangle_count(config: ObjectConfig) -> int:
    s = config.sizes
    return sum(3 * s[i] * s[j] * s[k] for i, j, k in config.triples())


def triangle_ids(vi: VarIndex, i: int, j: int, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Broadcast column ids of X_lt(i,j), X_tq(j,k), X_lq(i,k) over ``(l, t, q)``."""
    a = vi.block_ids(i, j)[:, :, None]
    b = vi.block_ids(j, k)[None, :, :]
    c = vi.block_ids(i, k)[:, None, :]
    shape = np.broadcast_shapes(a.shape, b.shape, c.shape)
    return (np.broadcast_to(a, shape).ravel(), np.broadcast_to(b, shape).ravel(),
            np.broadcast_to(c, shape).ravel())


def triangle_rows_for(vi: VarIndex, i: int, j: int, k: int, family: int | None = None):
    """CSR pieces (indptr, indices, data, keys) of the triangle rows of one triple."""
    a, b, c = triangle_ids(vi, i, j, k)
    di, dj, dk = (vi.config.sizes[v] for v in (i, j, k))
    cells = [(l, t, q) for l in range(di) for t in range(dj) for q in range(dk)]
    fams = range(3) if family is None else [family]
    ind, dat, keys = [], [], []
    for f in fams:
        ind.append(np.stack([a, b, c], axis=1))
        dat.append(np.broadcast_to(TRIANGLE_SIGNS[f], (len(a), 3)))
        keys += [("tri", i, j, k, f) + cell for cell in cells]
    ind = np.concatenate(ind).ravel()
    dat = np.concatenate(dat).ravel()
    ptr = np.arange(0, len(ind) + 1, 3)
    return ptr, ind, dat, keys


def add_all_triangles(model: RelaxationModel) -> None:
    vi = model.var_index
    for i, j, k in vi.config.triples():
        ptr, ind, dat, keys = triangle_rows_for(vi, i, j, k)
        model.keys.update(keys)
        model.add_rows(ptr, ind, dat, "<=", 1.0, tags=keys)


def _assignment_rows(model: RelaxationModel, sense: str) -> None:
    vi = model.var_index
    ptr, ind, keys = [0], [], []
    for i, j in vi.config.pairs():
        ids = vi.block_ids(i, j)
        for t in range(ids.shape[0]):
            ind.append(ids[t])
            ptr.append(ptr[-1] + ids.shape[1])
            keys.append(("row", i, j, t))
        for q in range(ids.shape[1]):
            ind.append(ids[:, q])
            ptr.append(ptr[-1] + ids.shape[0])
            keys.append(("col", i, j, q))
    ind = np.concatenate(ind)
    model.keys.update(keys)
    model.add_rows(np.array(ptr), ind, np.ones(len(ind)), sense, 1.0, tags=keys)


def _build(inst: Instance, kind: str, sense: str, lazy: bool | None, cap: int) -> RelaxationModel:
    vi = VarIndex(inst.config)
    model = RelaxationModel(kind, vi, kind)
    model.add_variables(vi.size, lb=0.0, cost=vi.cost_vector(inst), names=vi.names())
    _assignment_rows(model, sense)
    n_tri = triangle_count(inst.config)
    model.lazy_triangles = (n_tri > cap) if lazy is None else bool(lazy)
    if model.lazy_triangles:
        log.info("%s: %d triangle rows exceed cap %d; generating them lazily", kind, n_tri, cap)
    else:
        add_all_triangles(model)
    return model


def build_perm_sync_lp(inst: Instance, lazy: bool | None = None, cap: int = TRIANGLE_CAP) -> RelaxationModel:
    """Permutation synchronization LP: assignment equalities plus triangle rows."""
    if not inst.config.is_uniform:
        raise ConfigurationError(f"permutation synchronization needs equal sizes, got {inst.config.sizes}")
    return _build(inst, "perm_sync", "=", lazy, cap)


def build_jom_basic_lp(inst: Instance, lazy: bool | None = None, cap: int = TRIANGLE_CAP) -> RelaxationModel:
    """Basic LP for joint object matching: sub-assignment rows, triangle rows, ``X >= 0``."""
    return _build(inst, "jom_basic", "<=", lazy, cap)


def attach_cuts(model: RelaxationModel, cuts: Iterable) -> RelaxationModel:
    """Copy of ``model`` with one row per new cut; cuts already present are skipped."""
    out = model.copy()
    vi = model.var_index
    out.add_keyed_rows((cut.key(),) + tuple(cut.row(vi)) for cut in cuts)
    return out


# ---------------------------------------------------------------------------
# lazy triangle separation


def _uniform_blocks(vi: VarIndex, x: np.ndarray) -> np.ndarray:
    d = vi.config.sizes[0]
    return x.reshape(-1, d, d)


def _triples_array(n: int) -> np.ndarray:
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    mask = (i < j) & (j < k)
    return np.stack([i[mask], j[mask], k[mask]], axis=1)


def violated_triangles(vi: VarIndex, x: np.ndarray, tol: float = 1e-6,
                       limit: int | None = None, chunk: int = 20000) -> Iterator[tuple]:
    """Yield ``(key, idx, vals, "<=", 1.0)`` for triangle rows violated by more than ``tol``.

    Ordered by triple, family, then ``(l, t, q)``.
    """
    cfg = vi.config
    count = 0
    if cfg.is_uniform:
        d = cfg.sizes[0]
        X = _uniform_blocks(vi, x)
        pid = vi.pair_table()
        T = _triples_array(cfg.n)
        for s in range(0, len(T), chunk):
            tri = T[s:s + chunk]
            A = X[pid[tri[:, 0], tri[:, 1]]][:, :, :, None]
            B = X[pid[tri[:, 1], tri[:, 2]]][:, None, :, :]
            C = X[pid[tri[:, 0], tri[:, 2]]][:, :, None, :]
            lhs = np.stack([-A + B + C, A - B + C, A + B - C], axis=1)
            hits = np.argwhere(lhs > 1 + tol)
            for h, f, l, t, q in hits:
                i, j, k = (int(v) for v in tri[h])
                idx = [vi.index(i, j, l, t), vi.index(j, k, t, q), vi.index(i, k, l, q)]
                yield ("tri", i, j, k, int(f), int(l), int(t), int(q)), idx, TRIANGLE_SIGNS[f], "<=", 1.0
                count += 1
                if limit is not None and count >= limit:
                    return
        return
    for i, j, k in cfg.triples():
        a, b, c = triangle_ids(vi, i, j, k)
        xa, xb, xc = x[a], x[b], x[c]
        dj, dk = cfg.sizes[j], cfg.sizes[k]
        for f in range(3):
            lhs = TRIANGLE_SIGNS[f, 0] * xa + TRIANGLE_SIGNS[f, 1] * xb + TRIANGLE_SIGNS[f, 2] * xc
            for r in np.flatnonzero(lhs > 1 + tol):
                l, rem = divmod(int(r), dj * dk)
                t, q = divmod(rem, dk)
                yield ("tri", i, j, k, f, l, t, q), [a[r], b[r], c[r]], TRIANGLE_SIGNS[f], "<=", 1.0
                count += 1
                if limit is not None and count >= limit:
                    return


def max_triangle_violation(vi: VarIndex, x: np.ndarray) -> float:
    worst = 0.0
    for row in violated_triangles(vi, x, tol=0.0):
        _, idx, vals, _, _ = row
        worst = max(worst, float(np.dot(x[idx], vals)) - 1.0)
    return worst
