"""Random corruption model: each observed block is the identity or a uniform permutation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance, ObjectConfig

GENERATOR = "numpy.PCG64 via SeedSequence(seed, spawn_key=(i, j))"


@dataclass(frozen=True)
class CorruptionParams:
    n: int
    d: int
    p_true: float
    p_obs: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if not 0.0 <= self.p_true <= 1.0:
            raise ValueError(f"p_true must lie in [0, 1], got {self.p_true}")
        if not 0.0 < self.p_obs <= 1.0:
            raise ValueError(f"p_obs must lie in (0, 1], got {self.p_obs}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")


def pair_rng(seed: int, i: int, j: int) -> np.random.Generator:
    """Independent stream for the pair (i, j), 0-based."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i, j))))


def fisher_yates(rng: np.random.Generator, d: int) -> np.ndarray:
    perm = np.arange(d)
    for k in range(d - 1, 0, -1):
        r = int(rng.integers(0, k + 1))
        perm[k], perm[r] = perm[r], perm[k]
    return perm


def permutation_matrix(perm: np.ndarray) -> np.ndarray:
    d = len(perm)
    P = np.zeros((d, d), dtype=np.int64)
    P[np.arange(d), perm] = 1
    return P


def generate(params: CorruptionParams) -> Instance:
    n, d = params.n, params.d
    edges, blocks = [], {}
    n_true = 0
    for i in range(n):
        for j in range(i + 1, n):
            rng = pair_rng(params.seed, i, j)
            if rng.random() >= params.p_obs:
                continue
            if rng.random() < params.p_true:
                blk = np.eye(d, dtype=np.int64)
                n_true += 1
            else:
                blk = permutation_matrix(fisher_yates(rng, d))
            edges.append((i, j))
            blocks[(i, j)] = blk
    meta = {
        "generator": GENERATOR,
        "n": n, "d": d, "p_true": params.p_true, "p_obs": params.p_obs,
        "seed": params.seed, "correct_draws": n_true,
    }
    labels = tuple(tuple(range(1, d + 1)) for _ in range(n))
    return Instance(ObjectConfig.uniform(n, d), frozenset(edges), blocks,
                    ground_truth=labels, meta=meta)
