"""Solve pipelines: basic LP, the two-step double LP, and multi-round cutting planes."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cuts import VIOL_TOL, separate_all
from .instance import CycleViolation, Instance, SolutionMaps, check_cycle_consistency
from .lp_core import LpBasis, LpSolution, solve_with_basis
from .relaxation import (RelaxationModel, attach_cuts, build_jom_basic_lp, build_perm_sync_lp,
                         triangle_count, violated_triangles)

log = logging.getLogger(__name__)

BIN_TOL = 1e-4
UNIQUENESS_EPS = 1e-5
# above this many triangle rows the driver adds them on demand; the final LP is the same
LAZY_TRIANGLES_ABOVE = 20_000
TRIANGLES_PER_ROUND = 50_000

RESULT_COLUMNS = ("n", "d", "p_true", "p_obs", "seed", "method", "objective", "is_binary",
                  "recovered", "cuts_added", "rounds", "wall_ms")


@dataclass
class SolveReport:
    method: str
    status: str
    solution: LpSolution
    maps: SolutionMaps | None
    objective: float
    is_binary: bool
    is_consistent: bool | None
    recovered: bool | None
    cuts_added: int = 0
    rounds: int = 1
    wall_ms: float = 0.0
    unique: bool | None = None
    history: list = field(default_factory=list)
    model: RelaxationModel | None = None

    def csv_row(self, inst: Instance) -> dict:
        meta = inst.meta
        d = inst.config.sizes[0] if inst.config.is_uniform else max(inst.config.sizes)
        return {
            "n": inst.config.n, "d": d,
            "p_true": meta.get("p_true", ""), "p_obs": meta.get("p_obs", ""), "seed": meta.get("seed", ""),
            "method": self.method, "objective": f"{self.objective:.9g}",
            "is_binary": int(self.is_binary), "recovered": "" if self.recovered is None else int(self.recovered),
            "cuts_added": self.cuts_added, "rounds": self.rounds, "wall_ms": f"{self.wall_ms:.1f}",
        }


def choose_formulation(inst: Instance, formulation: str = "auto") -> str:
    if formulation == "auto":
        return "perm_sync" if inst.is_permutation_sync else "jom"
    if formulation not in ("perm_sync", "jom"):
        raise ValueError(f"unknown formulation {formulation!r}")
    return formulation


def build_model(inst: Instance, formulation: str = "auto", lazy: bool | None = None) -> RelaxationModel:
    kind = choose_formulation(inst, formulation)
    if lazy is None:
        lazy = triangle_count(inst.config) > LAZY_TRIANGLES_ABOVE
    build = build_perm_sync_lp if kind == "perm_sync" else build_jom_basic_lp
    return build(inst, lazy=lazy)


def solve_model(model: RelaxationModel, basis: LpBasis | None = None,
                backend: str | None = None) -> tuple[LpSolution, int]:
    """Solve, adding violated triangle rows until none remain when they are generated lazily.

    Mutates ``model`` by appending those rows; returns the final solution and
    the number of LP solves.
    """
    solves = 0
    while True:
        sol = solve_with_basis(model, basis, backend=backend)
        solves += 1
        if not sol.optimal or not model.lazy_triangles:
            return sol, solves
        added = model.add_keyed_rows(violated_triangles(model.var_index, sol.x, VIOL_TOL,
                                                        limit=TRIANGLES_PER_ROUND))
        if added == 0:
            return sol, solves
        basis = sol.basis


def round_solution(S: SolutionMaps) -> tuple[SolutionMaps, CycleViolation | None]:
    """Per-block maximum-weight assignment, keeping only positive entries, then a consistency check."""
    blocks = {}
    for (i, j), blk in S.items():
        W = np.asarray(blk, dtype=float)
        rows, cols = linear_sum_assignment(W, maximize=True)
        out = np.zeros(W.shape, dtype=np.int64)
        keep = W[rows, cols] > BIN_TOL
        out[rows[keep], cols[keep]] = 1
        blocks[(i, j)] = out
    R = SolutionMaps(S.config, blocks)
    return R, check_cycle_consistency(R)


def _classify(inst: Instance, model: RelaxationModel, sol: LpSolution, method: str,
              t0: float, bin_tol: float) -> SolveReport:
    if not sol.optimal:
        return SolveReport(method, sol.status, sol, None, float("nan"), False, None, None,
                           wall_ms=1000 * (time.perf_counter() - t0), model=model)
    x = np.clip(sol.x, 0.0, 1.0)
    S = model.var_index.to_maps(x)
    binary = S.max_fractionality() <= bin_tol
    consistent = recovered = None
    if binary:
        R = S.rounded()
        consistent = check_cycle_consistency(R) is None
        gt = inst.ground_truth_maps()
        if gt is not None:
            recovered = R.equals(gt)
    elif inst.ground_truth is not None:
        recovered = False
    return SolveReport(method, "optimal", sol, S, float(sol.objective), binary, consistent, recovered,
                       wall_ms=1000 * (time.perf_counter() - t0), model=model)


def uniqueness_probe(inst: Instance, report: SolveReport, eps: float = UNIQUENESS_EPS,
                     backend: str | None = None) -> bool:
    """Heuristic check that the recovered ground truth is the only LP optimum.

    Adds ``eps`` to the cost of every ground-truth-support variable and
    re-solves from the optimal basis; if some other optimum existed, the
    perturbed LP moves to it.
    """
    model = report.model.copy()
    gt = report.model.var_index.to_vector(inst.ground_truth_maps())
    model.set_cost(model.c + eps * gt)
    sol, _ = solve_model(model, report.solution.basis, backend)
    if not sol.optimal:
        return False
    return bool(np.abs(sol.x - gt).max() <= BIN_TOL)


def solve_basic(inst: Instance, formulation: str = "auto", backend: str | None = None,
                bin_tol: float = BIN_TOL, lazy: bool | None = None, probe: bool = False) -> SolveReport:
    t0 = time.perf_counter()
    model = build_model(inst, formulation, lazy)
    sol, _ = solve_model(model, None, backend)
    rep = _classify(inst, model, sol, "basic", t0, bin_tol)
    rep.history = [rep.objective]
    if probe and rep.recovered:
        rep.unique = uniqueness_probe(inst, rep, backend=backend)
    return rep


def double_lp(inst: Instance, cut_limit: int = 1000, strategy: str = "first-k", formulation: str = "auto",
              backend: str | None = None, bin_tol: float = BIN_TOL, lazy: bool | None = None,
              first: SolveReport | None = None) -> SolveReport:
    """Basic LP, then one round of at most ``cut_limit`` violated consistency cuts, warm-started.

    ``first`` reuses an existing basic-LP report of the same instance; it is
    copied, not modified.
    """
    t0 = time.perf_counter()
    if first is None:
        first = solve_basic(inst, formulation, backend, bin_tol, lazy)
    else:
        first = dataclasses.replace(first, history=list(first.history))
    if first.status != "optimal" or first.is_binary:
        first.method = "double"
        first.wall_ms = 1000 * (time.perf_counter() - t0)
        return first
    cuts = separate_all(first.maps, limit=cut_limit, strategy=strategy)
    if not cuts:
        first.method = "double"
        first.wall_ms = 1000 * (time.perf_counter() - t0)
        return first
    model = attach_cuts(first.model, cuts)
    sol, _ = solve_model(model, first.solution.basis, backend)
    rep = _classify(inst, model, sol, "double", t0, bin_tol)
    rep.cuts_added = len(cuts)
    rep.rounds = 2
    rep.history = [first.objective, rep.objective]
    return rep


def cutting_plane_lpf(inst: Instance, max_rounds: int = 50, per_round_limit: int = 1000,
                      strategy: str = "first-k", formulation: str = "auto", backend: str | None = None,
                      bin_tol: float = BIN_TOL, lazy: bool | None = None) -> SolveReport:
    """Repeat separate / attach / re-solve until no consistency cut is violated.

    ``status`` is ``"optimal"`` on convergence and ``"round-limit"`` otherwise.
    """
    t0 = time.perf_counter()
    rep = solve_basic(inst, formulation, backend, bin_tol, lazy)
    history = [rep.objective]
    total = 0
    rounds = 1
    while rep.status == "optimal":
        cuts = separate_all(rep.maps, limit=per_round_limit, strategy=strategy)
        if not cuts:
            break
        if rounds >= max_rounds:
            rep.status = "round-limit"
            break
        model = attach_cuts(rep.model, cuts)
        sol, _ = solve_model(model, rep.solution.basis, backend)
        total += len(cuts)
        rounds += 1
        rep = _classify(inst, model, sol, "lpf", t0, bin_tol)
        history.append(rep.objective)
    rep.method = "lpf"
    rep.cuts_added = total
    rep.rounds = rounds
    rep.history = history
    rep.wall_ms = 1000 * (time.perf_counter() - t0)
    return rep


METHODS = {"basic": solve_basic, "double": double_lp, "lpf": cutting_plane_lpf}


def run_method(inst: Instance, method: str, **kw) -> SolveReport:
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}") from None
    return fn(inst, **kw)
