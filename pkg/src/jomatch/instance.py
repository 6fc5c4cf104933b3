"""Objects, partial maps, map graphs and the joint-matching objective.

Indices are 0-based in memory and 1-based in every file format.  A block
``X(i, j)`` is stored once for ``i < j``; ``X(j, i)`` is served as a
transposed view.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

BOX_TOL = 1e-6


class MalformedInputError(ValueError):
    """Raised when a map or a collection of maps is structurally invalid."""


class InstanceFormatError(ValueError):
    """Raised when an instance file violates the JSON schema."""


@dataclass(frozen=True)
class ObjectConfig:
    n: int
    sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.n < 2:
            raise ValueError(f"need at least 2 objects, got n={self.n}")
        if len(self.sizes) != self.n:
            raise ValueError(f"{len(self.sizes)} sizes given for n={self.n} objects")
        if any(s < 1 for s in self.sizes):
            raise ValueError(f"object sizes must be >= 1, got {self.sizes}")

    @classmethod
    def uniform(cls, n: int, d: int) -> "ObjectConfig":
        return cls(n, (d,) * n)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def d_max(self) -> int:
        return max(self.sizes)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.sizes)) == 1

    def pairs(self) -> Iterator[tuple[int, int]]:
        return combinations(range(self.n), 2)

    def triples(self) -> Iterator[tuple[int, int, int]]:
        return combinations(range(self.n), 3)

    def shape(self, i: int, j: int) -> tuple[int, int]:
        return self.sizes[i], self.sizes[j]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class _BlockStore:
    """Upper-triangular block storage with transposed access."""

    _blocks: dict[tuple[int, int], np.ndarray]

    def block(self, i: int, j: int) -> np.ndarray:
        if i == j:
            raise KeyError(f"no block for the diagonal pair ({i}, {j})")
        if i < j:
            return self._blocks[(i, j)]
        return self._blocks[(j, i)].T


class SolutionMaps(_BlockStore):
    """One block per unordered pair; entries may be floats, ints or Fractions."""

    def __init__(self, config: ObjectConfig, blocks: Mapping[tuple[int, int], object],
                 check_box: bool = True):
        self.config = config
        self._blocks = {}
        for i, j in config.pairs():
            if (i, j) not in blocks:
                raise MalformedInputError(f"missing block for pair ({i + 1},{j + 1})")
            arr = np.asarray(blocks[(i, j)])
            if arr.shape != config.shape(i, j):
                raise MalformedInputError(
                    f"block ({i + 1},{j + 1}) has shape {arr.shape}, expected {config.shape(i, j)}")
            self._blocks[(i, j)] = _freeze(arr)
        if check_box:
            for (i, j), arr in self._blocks.items():
                if arr.dtype != object and not np.all(np.isfinite(arr)):
                    raise MalformedInputError(f"block ({i + 1},{j + 1}) has non-finite entries")
                if arr.size and (arr.min() < -BOX_TOL or arr.max() > 1 + BOX_TOL):
                    raise MalformedInputError(f"block ({i + 1},{j + 1}) leaves the [0,1] box")

    @classmethod
    def zeros(cls, config: ObjectConfig, dtype=np.int64) -> "SolutionMaps":
        return cls(config, {(i, j): np.zeros(config.shape(i, j), dtype=dtype)
                            for i, j in config.pairs()})

    @classmethod
    def from_pairs(cls, config: ObjectConfig, blocks: Mapping[tuple[int, int], object],
                   dtype=None) -> "SolutionMaps":
        """Build from a partial dict (1-based keys ``(i, j)``); missing pairs are zero."""
        full = {}
        for i, j in config.pairs():
            b = blocks.get((i + 1, j + 1))
            if b is None:
                full[(i, j)] = np.zeros(config.shape(i, j), dtype=dtype or np.int64)
            else:
                full[(i, j)] = np.array(b, dtype=dtype)
        return cls(config, full)

    def items(self):
        return self._blocks.items()

    def is_binary(self, tol: float = 0.0) -> bool:
        return all(np.all(np.abs(b.astype(float) - np.round(b.astype(float))) <= tol)
                   for b in self._blocks.values())

    def max_fractionality(self) -> float:
        worst = 0.0
        for b in self._blocks.values():
            f = b.astype(float)
            if f.size:
                worst = max(worst, float(np.max(np.abs(f - np.round(f)))))
        return worst

    def rounded(self) -> "SolutionMaps":
        return SolutionMaps(self.config, {k: np.round(v.astype(float)).astype(np.int64)
                                          for k, v in self._blocks.items()})

    def equals(self, other: "SolutionMaps", tol: float = 0.0) -> bool:
        if self.config != other.config:
            return False
        return all(np.all(np.abs(self.block(i, j).astype(float) - other.block(i, j).astype(float)) <= tol)
                   for i, j in self.config.pairs())

    def __repr__(self):
        return f"SolutionMaps(n={self.config.n}, sizes={self.config.sizes})"


@dataclass(frozen=True)
class Instance(_BlockStore):
    """Input maps on the observed edges of the map graph."""

    config: ObjectConfig
    edges: frozenset
    input: Mapping[tuple[int, int], np.ndarray]
    ground_truth: tuple[tuple[int, ...], ...] | None = None
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        cfg = self.config
        edges = set()
        for e in self.edges:
            i, j = sorted(int(v) for v in e)
            if not (0 <= i < j < cfg.n):
                raise MalformedInputError(f"edge ({i + 1},{j + 1}) out of range for n={cfg.n}")
            edges.add((i, j))
        object.__setattr__(self, "edges", frozenset(edges))
        blocks = {}
        for (i, j) in edges:
            if (i, j) not in self.input:
                raise MalformedInputError(f"observed edge ({i + 1},{j + 1}) has no input block")
            arr = np.asarray(self.input[(i, j)])
            if arr.shape != cfg.shape(i, j):
                raise MalformedInputError(
                    f"input block ({i + 1},{j + 1}) has shape {arr.shape}, expected {cfg.shape(i, j)}")
            ok, where = validate_partial_map(arr)
            if not ok:
                raise MalformedInputError(
                    f"input block ({i + 1},{j + 1}) is not a partial map: {where[0]} {where[1] + 1} sums to more than 1")
            blocks[(i, j)] = _freeze(arr.astype(np.int64))
        extra = set(self.input) - edges
        if extra:
            raise MalformedInputError(f"input blocks given for unobserved pairs {sorted(extra)}")
        object.__setattr__(self, "input", blocks)
        object.__setattr__(self, "_blocks", blocks)
        if self.ground_truth is not None:
            labels = tuple(tuple(int(v) for v in row) for row in self.ground_truth)
            validate_labeling(cfg, labels)
            object.__setattr__(self, "ground_truth", labels)
        object.__setattr__(self, "meta", dict(self.meta))

    def is_observed(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    @property
    def is_complete(self) -> bool:
        return len(self.edges) == self.config.n * (self.config.n - 1) // 2

    @property
    def is_permutation_sync(self) -> bool:
        """Uniform sizes and every observed block a full permutation matrix."""
        if not self.config.is_uniform:
            return False
        return all(np.all(b.sum(axis=0) == 1) and np.all(b.sum(axis=1) == 1)
                   for b in self.input.values())

    def ground_truth_maps(self) -> SolutionMaps | None:
        if self.ground_truth is None:
            return None
        return labels_to_maps(self.config, self.ground_truth)


class CostTensor(_BlockStore):
    """``a(i,j) = 1 - 2 X_in(i,j)`` on observed pairs, zero elsewhere."""

    def __init__(self, inst: Instance):
        self.config = inst.config
        self._blocks = {}
        for i, j in inst.config.pairs():
            if inst.is_observed(i, j):
                a = 1 - 2 * inst.input[(i, j)]
            else:
                a = np.zeros(inst.config.shape(i, j), dtype=np.int64)
            self._blocks[(i, j)] = _freeze(a)

    def items(self):
        return self._blocks.items()


def cost_tensor(inst: Instance) -> CostTensor:
    return CostTensor(inst)


# ---------------------------------------------------------------------------
# structural checks


def _require_binary(M: np.ndarray, what: str = "matrix"):
    f = np.asarray(M)
    if f.dtype == object:
        f = f.astype(float)
    if not np.all((f == 0) | (f == 1)):
        raise MalformedInputError(f"{what} has non-binary entries")


def validate_partial_map(M) -> tuple[bool, tuple[str, int] | None]:
    """Check the row/column-sum condition of a binary block.

    Returns ``(True, None)`` or ``(False, ("row"|"col", index))`` naming the
    first offending line (0-based).
    """
    M = np.asarray(M)
    _require_binary(M, "partial map")
    if M.size == 0:
        return True, None
    rows = np.flatnonzero(M.sum(axis=1) > 1)
    if rows.size:
        return False, ("row", int(rows[0]))
    cols = np.flatnonzero(M.sum(axis=0) > 1)
    if cols.size:
        return False, ("col", int(cols[0]))
    return True, None


class CycleViolation(NamedTuple):
    """0-based witness ``(i, j, k, l, t, q)`` plus which triangle row failed.

    ``family`` 0, 1, 2 is the row whose negative term sits on ``X(i,j)``,
    ``X(j,k)``, ``X(i,k)`` respectively.
    """

    i: int
    j: int
    k: int
    l: int
    t: int
    q: int
    family: int

    def one_based(self) -> tuple[int, ...]:
        return tuple(v + 1 for v in self[:6])


def triangle_lhs(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """LHS of the three triangle rows for blocks A=X(i,j), B=X(j,k), C=X(i,k).

    Result has shape ``(3, d_i, d_j, d_k)`` indexed by ``(family, l, t, q)``.
    """
    a = A[:, :, None]
    b = B[None, :, :]
    c = C[:, None, :]
    return np.stack([-a + b + c, a - b + c, a + b - c])


def check_cycle_consistency(S: SolutionMaps) -> CycleViolation | None:
    """Return ``None`` if ``S`` is cycle consistent, else the first violated triangle row."""
    cfg = S.config
    for (i, j), blk in S.items():
        _require_binary(blk, f"block ({i + 1},{j + 1})")
        ok, where = validate_partial_map(blk)
        if not ok:
            raise MalformedInputError(f"block ({i + 1},{j + 1}) is not a partial map ({where[0]} {where[1] + 1})")
    for i, j, k in cfg.triples():
        lhs = triangle_lhs(S.block(i, j).astype(np.int64), S.block(j, k).astype(np.int64),
                           S.block(i, k).astype(np.int64))
        bad = np.argwhere(lhs > 1)
        if bad.size:
            fam, l, t, q = (int(v) for v in bad[0])
            return CycleViolation(i, j, k, l, t, q, fam)
    return None


# ---------------------------------------------------------------------------
# objective


def matched_pairs(inst: Instance) -> int:
    return int(sum(int(b.sum()) for b in inst.input.values()))


def linear_objective(inst: Instance, S: SolutionMaps):
    """Sum over observed edges of ``<1 1^T - 2 X_in(i,j), X(i,j)>``.

    Exact for integer or Fraction blocks; float otherwise.
    """
    if S.config != inst.config:
        raise MalformedInputError("solution and instance disagree on object sizes")
    total = 0
    for (i, j) in sorted(inst.edges):
        a = 1 - 2 * inst.input[(i, j)]
        x = S.block(i, j)
        if x.dtype == object:
            total += sum(int(av) * xv for av, xv in zip(a.ravel(), x.ravel()))
        else:
            total += (a * x).sum()
    return total


def frobenius_objective(inst: Instance, S: SolutionMaps):
    """Sum over observed edges of ``||X_in(i,j) - X(i,j)||_F^2``."""
    total = 0
    for (i, j) in sorted(inst.edges):
        diff = inst.input[(i, j)] - S.block(i, j)
        total += (diff * diff).sum()
    return total


# ---------------------------------------------------------------------------
# universe labelings (label 0 = element matched to nothing)


def validate_labeling(config: ObjectConfig, labels: Sequence[Sequence[int]]):
    if len(labels) != config.n:
        raise MalformedInputError(f"labeling has {len(labels)} objects, expected {config.n}")
    for i, row in enumerate(labels):
        if len(row) != config.sizes[i]:
            raise MalformedInputError(
                f"labeling of object {i + 1} has {len(row)} entries, expected {config.sizes[i]}")
        nz = [v for v in row if v != 0]
        if any(v < 0 for v in row):
            raise MalformedInputError(f"negative label in object {i + 1}")
        if len(nz) != len(set(nz)):
            raise MalformedInputError(f"object {i + 1} uses a universe label twice")


def labels_to_maps(config: ObjectConfig, labels: Sequence[Sequence[int]]) -> SolutionMaps:
    validate_labeling(config, labels)
    blocks = {}
    for i, j in config.pairs():
        li = np.asarray(labels[i])[:, None]
        lj = np.asarray(labels[j])[None, :]
        blocks[(i, j)] = ((li == lj) & (li != 0)).astype(np.int64)
    return SolutionMaps(config, blocks)


# ---------------------------------------------------------------------------
# JSON


def instance_to_dict(inst: Instance) -> dict:
    cfg = inst.config
    out = {
        "n": cfg.n,
        "sizes": list(cfg.sizes),
        "edges": [[i + 1, j + 1] for i, j in sorted(inst.edges)],
        "blocks": {f"{i + 1},{j + 1}": inst.input[(i, j)].tolist() for i, j in sorted(inst.edges)},
    }
    if inst.ground_truth is not None:
        out["ground_truth"] = [list(r) for r in inst.ground_truth]
    if inst.meta:
        out["meta"] = dict(inst.meta)
    return out


def _field(d: dict, key: str, kind, where: str = ""):
    if key not in d:
        raise InstanceFormatError(f"missing required field {where}{key!r}")
    val = d[key]
    if not isinstance(val, kind) or isinstance(val, bool):
        raise InstanceFormatError(f"field {where}{key!r} must be {getattr(kind, '__name__', kind)}")
    return val


def instance_from_dict(d: dict) -> Instance:
    if not isinstance(d, dict):
        raise InstanceFormatError("top level must be a JSON object")
    n = _field(d, "n", int)
    sizes = _field(d, "sizes", list)
    if any(not isinstance(s, int) or isinstance(s, bool) for s in sizes):
        raise InstanceFormatError("field 'sizes' must be a list of integers")
    try:
        cfg = ObjectConfig(n, tuple(sizes))
    except ValueError as e:
        raise InstanceFormatError(str(e)) from None
    edges_raw = _field(d, "edges", list)
    blocks_raw = _field(d, "blocks", dict)
    edges = []
    for pos, e in enumerate(edges_raw):
        if (not isinstance(e, list) or len(e) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in e)):
            raise InstanceFormatError(f"edges[{pos}] must be a pair of integers")
        i, j = e
        if not (1 <= i < j <= n):
            raise InstanceFormatError(f"edges[{pos}] = {e} must satisfy 1 <= i < j <= n")
        edges.append((i - 1, j - 1))
    blocks = {}
    for key, rows in blocks_raw.items():
        try:
            i, j = (int(v) for v in key.split(","))
        except ValueError:
            raise InstanceFormatError(f"blocks key {key!r} is not of the form 'i,j'") from None
        if (i - 1, j - 1) not in edges:
            raise InstanceFormatError(f"blocks[{key!r}] refers to a pair missing from 'edges'")
        arr = np.asarray(rows)
        if arr.shape != cfg.shape(i - 1, j - 1):
            raise InstanceFormatError(
                f"blocks[{key!r}] has shape {arr.shape}, expected {cfg.shape(i - 1, j - 1)}")
        if not np.all((arr == 0) | (arr == 1)):
            raise InstanceFormatError(f"blocks[{key!r}] has entries other than 0/1")
        ok, where = validate_partial_map(arr)
        if not ok:
            raise InstanceFormatError(f"blocks[{key!r}] {where[0]} {where[1] + 1} sums to more than 1")
        blocks[(i - 1, j - 1)] = arr.astype(np.int64)
    missing = [e for e in edges if e not in blocks]
    if missing:
        i, j = missing[0]
        raise InstanceFormatError(f"edge [{i + 1},{j + 1}] has no entry in 'blocks'")
    gt = d.get("ground_truth")
    try:
        return Instance(cfg, frozenset(edges), blocks,
                        ground_truth=None if gt is None else tuple(tuple(r) for r in gt),
                        meta=d.get("meta", {}))
    except MalformedInputError as e:
        raise InstanceFormatError(str(e)) from None


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n")


def read_instance(path) -> Instance:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    try:
        return instance_from_dict(data)
    except InstanceFormatError as e:
        raise InstanceFormatError(f"{path}: {e}") from None


def complete_instance(config: ObjectConfig, blocks: Mapping[tuple[int, int], object],
                      ground_truth=None) -> Instance:
    """Instance on the complete map graph from 0-based ``blocks``."""
    return Instance(config, frozenset(config.pairs()), dict(blocks), ground_truth=ground_truth)


def iter_binary_pairs(blocks: Iterable[np.ndarray]) -> int:
    return sum(int(np.asarray(b).sum()) for b in blocks)
