"""Sparse LP container, a bounded revised simplex, a HiGHS bridge and LP-file I/O.

All models are minimizations.  Row duals follow ``c = A^T y + z``: a binding
``<=`` row has ``y <= 0``, a binding ``>=`` row has ``y >= 0``.
"""
from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
CS_TOL = 1e-6
GAP_TOL = 1e-7

LE, EQ, GE = "L", "E", "G"
_SENSE_ALIASES = {"<=": LE, "L": LE, "=": EQ, "==": EQ, "E": EQ, ">=": GE, "G": GE}

BACKENDS = ("auto", "builtin", "highs", "export-only")
BUILTIN_MAX_ROWS = 1000
BUILTIN_MAX_COLS = 20000

# column status codes shared by both backends
BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3


class LpError(RuntimeError):
    pass


def _sense(s) -> str:
    try:
        return _SENSE_ALIASES[s]
    except KeyError:
        raise ValueError(f"unknown row sense {s!r}") from None


class LpModel:
    """Column bounds and costs plus rows stored as CSR chunks."""

    def __init__(self, name: str = "jomatch"):
        self.name = name
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self.var_names: list[str] | None = []
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._senses: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.row_tags: list = []
        self.n_vars = 0
        self.n_rows = 0
        self._cache: dict = {}

    # -- building ----------------------------------------------------------
    def add_variables(self, count: int, lb=0.0, ub=math.inf, cost=0.0,
                      names: Sequence[str] | None = None) -> int:
        start = self.n_vars
        for store, v in ((self._lb, lb), (self._ub, ub), (self._c, cost)):
            arr = np.broadcast_to(np.asarray(v, dtype=float), (count,)).copy()
            store.append(arr)
        lo, hi, c = self._lb[-1], self._ub[-1], self._c[-1]
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or not np.all(np.isfinite(c)):
            raise ValueError("variable bounds and costs must be numbers; costs finite")
        if np.any(lo > hi):
            raise ValueError("variable lower bound exceeds upper bound")
        if self.var_names is not None:
            if names is None:
                self.var_names = None
            else:
                if len(names) != count:
                    raise ValueError("names length mismatch")
                self.var_names.extend(names)
        self.n_vars += count
        self._cache.clear()
        return start

    def add_row(self, idx, vals, sense, rhs, tag=None) -> int:
        idx = np.asarray(idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        return self.add_rows(np.array([0, len(idx)]), idx, vals, [sense], [rhs], tags=[tag])

    def add_rows(self, indptr, indices, data, senses, rhs, tags=None) -> int:
        """Append rows in CSR form; returns the id of the first new row."""
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=float)
        k = len(indptr) - 1
        if isinstance(senses, str):
            senses = [senses] * k
        senses = np.array([_sense(s) for s in senses]) if k else np.array([], dtype="<U1")
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (k,)).copy()
        if len(senses) != k:
            raise ValueError("senses length mismatch")
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_vars):
            raise ValueError("row references an unknown variable")
        if not (np.all(np.isfinite(data)) and np.all(np.isfinite(rhs))):
            raise ValueError("row coefficients and rhs must be finite")
        if k:
            probe = sp.csr_matrix((np.ones_like(data), indices, indptr), shape=(k, self.n_vars))
            probe.sum_duplicates()
            if probe.nnz != len(indices):
                raise ValueError("a row lists the same variable twice")
        start = self.n_rows
        self._chunks.append((indptr, indices, data))
        self._senses.append(senses)
        self._rhs.append(rhs)
        self.row_tags.extend(tags if tags is not None else [None] * k)
        self.n_rows += k
        self._cache.clear()
        return start

    def copy(self) -> "LpModel":
        """Shallow structural copy; row chunks are shared but never mutated."""
        m = self.__class__.__new__(self.__class__)
        m.__dict__.update(self.__dict__)
        for k, v in self.__dict__.items():
            if isinstance(v, (list, set)):
                setattr(m, k, type(v)(v))
        m._cache = {}
        return m

    def set_cost(self, c) -> None:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n_vars,):
            raise ValueError("cost vector has the wrong length")
        self._c = [c.copy()]
        self._cache.clear()

    # -- views ---------------------------------------------------------------
    def _cat(self, key, parts, dtype=float):
        if key not in self._cache:
            self._cache[key] = np.concatenate(parts) if parts else np.zeros(0, dtype=dtype)
        return self._cache[key]

    @property
    def lb(self) -> np.ndarray:
        return self._cat("lb", self._lb)

    @property
    def ub(self) -> np.ndarray:
        return self._cat("ub", self._ub)

    @property
    def c(self) -> np.ndarray:
        return self._cat("c", self._c)

    @property
    def senses(self) -> np.ndarray:
        return self._cat("senses", self._senses, dtype="<U1")

    @property
    def rhs(self) -> np.ndarray:
        return self._cat("rhs", self._rhs)

    def matrix(self) -> sp.csr_matrix:
        if "A" not in self._cache:
            if not self._chunks:
                A = sp.csr_matrix((0, self.n_vars))
            else:
                blocks = [sp.csr_matrix((d, ix, p), shape=(len(p) - 1, self.n_vars))
                          for p, ix, d in self._chunks]
                A = sp.vstack(blocks, format="csr")
            self._cache["A"] = A
        return self._cache["A"]

    def name_of(self, j: int) -> str:
        return self.var_names[j] if self.var_names else f"x{j}"

    def __repr__(self):
        return f"LpModel({self.name!r}, vars={self.n_vars}, rows={self.n_rows})"


@dataclass
class LpBasis:
    """Backend-neutral basis: column codes (BASIC/AT_LOWER/AT_UPPER/AT_ZERO), row slack basic flags."""

    col_status: np.ndarray
    row_basic: np.ndarray

    def extended(self, n_rows: int) -> "LpBasis":
        """Basis for the same model with extra rows appended (their slacks basic)."""
        extra = n_rows - len(self.row_basic)
        if extra < 0:
            raise LpError("basis has more rows than the model")
        return LpBasis(self.col_status.copy(),
                       np.concatenate([self.row_basic, np.ones(extra, dtype=bool)]))


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0
    basis: LpBasis | None = None
    backend: str = ""
    warm_started: bool = False
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# certificates


def dual_objective(model: LpModel, y: np.ndarray, z: np.ndarray) -> float:
    lb, ub = model.lb, model.ub
    z = np.where(np.abs(z) <= 1e-9, 0.0, z)
    zp = np.maximum(z, 0.0)
    zm = np.minimum(z, 0.0)
    with np.errstate(invalid="ignore"):
        lo = np.where(zp > 0, zp * lb, 0.0)
        hi = np.where(zm < 0, zm * ub, 0.0)
    return float(model.rhs @ y + lo.sum() + hi.sum())


def check_solution(model: LpModel, sol: LpSolution) -> dict:
    """Primal feasibility, complementary slackness and duality gap residuals."""
    A = model.matrix()
    x, y = sol.x, sol.y
    z = model.c - A.T @ y
    z = np.where(np.abs(z) <= 1e-9, 0.0, z)
    act = A @ x
    s, b = model.senses, model.rhs
    viol = np.zeros(model.n_rows)
    viol = np.where(s == LE, np.maximum(act - b, 0), viol)
    viol = np.where(s == GE, np.maximum(b - act, 0), viol)
    viol = np.where(s == EQ, np.abs(act - b), viol)
    bound_viol = np.maximum(np.maximum(model.lb - x, x - model.ub), 0)
    primal = float(max(viol.max(initial=0), bound_viol.max(initial=0)))
    # dual sign feasibility
    dsign = np.where(s == LE, np.maximum(y, 0), np.where(s == GE, np.maximum(-y, 0), 0))
    zbad = np.where(np.isinf(model.lb), np.maximum(z, 0), 0) + np.where(np.isinf(model.ub), np.maximum(-z, 0), 0)
    dual = float(max(dsign.max(initial=0), zbad.max(initial=0)))
    slack = np.abs(act - b)
    cs_rows = np.abs(y) * np.minimum(slack, 1e12)
    dist_lo = np.where(np.isfinite(model.lb), x - model.lb, np.inf)
    dist_hi = np.where(np.isfinite(model.ub), model.ub - x, np.inf)
    cs_cols = np.where(z > 0, z * np.minimum(dist_lo, 1e12), -z * np.minimum(dist_hi, 1e12))
    cs = float(max(cs_rows.max(initial=0), cs_cols.max(initial=0)))
    primal_obj = float(model.c @ x)
    dobj = dual_objective(model, y, z)
    return {
        "primal_infeasibility": primal,
        "dual_infeasibility": dual,
        "complementarity": cs,
        "primal_objective": primal_obj,
        "dual_objective": dobj,
        "gap": abs(primal_obj - dobj),
        "gap_ok": abs(primal_obj - dobj) <= GAP_TOL * (1 + abs(primal_obj)),
    }


# ---------------------------------------------------------------------------
# builtin bounded revised simplex


class _Simplex:
    REFACTOR = 100
    STALL = 50
    PIV_TOL = 1e-9
    DUAL_TOL = 1e-9
    PRIM_TOL = 1e-9

    def __init__(self, model: LpModel, max_iter: int | None):
        A = model.matrix().tocsc()
        m, n = A.shape
        self.m, self.n = m, n
        s = model.senses
        slk_lb = np.where(s == GE, -np.inf, 0.0)
        slk_ub = np.where(s == LE, np.inf, 0.0)
        self.cols = sp.hstack([A, sp.identity(m, format="csc")], format="csc")
        self.lb = np.concatenate([model.lb, slk_lb])
        self.ub = np.concatenate([model.ub, slk_ub])
        self.c = np.concatenate([model.c, np.zeros(m)])
        self.b = model.rhs.astype(float)
        self.iters = 0
        self.max_iter = max_iter if max_iter is not None else 20 * (m + n) + 1000
        self.status = np.full(n + m, AT_LOWER, dtype=np.int8)
        self.basis = np.arange(n, n + m)
        self.Binv = np.eye(m)
        self._since_refactor = 0

    # -- linear algebra --------------------------------------------------------
    def _finalize_cols(self):
        self.colsT = self.cols.T.tocsr()

    def column(self, j: int) -> np.ndarray:
        out = np.zeros(self.m)
        lo, hi = self.cols.indptr[j], self.cols.indptr[j + 1]
        out[self.cols.indices[lo:hi]] = self.cols.data[lo:hi]
        return out

    def refactor(self) -> None:
        B = self.cols[:, self.basis].toarray()
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise LpError("singular basis") from None
        if not np.all(np.isfinite(Binv)):
            raise LpError("singular basis")
        self.Binv = Binv
        self._since_refactor = 0

    def pivot(self, r: int, alpha: np.ndarray) -> None:
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self._since_refactor += 1
        if self._since_refactor >= self.REFACTOR:
            self.refactor()

    def nonbasic_values(self) -> np.ndarray:
        st = self.status
        v = np.where(st == AT_LOWER, self.lb, np.where(st == AT_UPPER, self.ub, 0.0))
        v[self.basis] = 0.0
        v[st == AT_ZERO] = 0.0
        return v

    def basic_values(self) -> np.ndarray:
        xn = self.nonbasic_values()
        return self.Binv @ (self.b - self.cols @ xn)

    def full_x(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.basic_values()
        return x

    def duals(self, cost) -> tuple[np.ndarray, np.ndarray]:
        y = cost[self.basis] @ self.Binv
        d = cost - self.colsT @ y
        return y, d

    def _nonbasic_start(self) -> None:
        st = np.where(np.isfinite(self.lb), AT_LOWER, np.where(np.isfinite(self.ub), AT_UPPER, AT_ZERO))
        self.status = st.astype(np.int8)

    # -- primal simplex ----------------------------------------------------------
    def primal(self, cost) -> str:
        degenerate = 0
        while True:
            if self.iters >= self.max_iter:
                return "iteration-limit"
            y, d = self.duals(cost)
            st = self.status
            movable = self.ub > self.lb
            cand = ((st == AT_LOWER) & (d < -self.DUAL_TOL) & movable) | \
                   ((st == AT_UPPER) & (d > self.DUAL_TOL) & movable) | \
                   ((st == AT_ZERO) & (np.abs(d) > self.DUAL_TOL))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return "optimal"
            bland = degenerate >= self.STALL
            q = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.Binv @ self.column(q)
            xB = self.basic_values()
            rate = -direction * alpha
            lbB, ubB = self.lb[self.basis], self.ub[self.basis]
            theta = np.full(self.m, np.inf)
            dec = rate < -self.PIV_TOL
            inc = rate > self.PIV_TOL
            theta[dec] = np.maximum(xB[dec] - lbB[dec], 0) / -rate[dec]
            theta[inc] = np.maximum(ubB[inc] - xB[inc], 0) / rate[inc]
            span = self.ub[q] - self.lb[q]
            tmin = theta.min(initial=np.inf)
            self.iters += 1
            if span <= tmin and np.isfinite(span):
                self.status[q] = AT_UPPER if self.status[q] == AT_LOWER else AT_LOWER
                degenerate = 0 if span > 1e-12 else degenerate + 1
                continue
            if not np.isfinite(tmin):
                return "unbounded"
            ties = np.flatnonzero(theta <= tmin + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[r]
            self.status[leaving] = AT_LOWER if rate[r] < 0 else AT_UPPER
            if self.status[leaving] == AT_LOWER and not np.isfinite(self.lb[leaving]):
                self.status[leaving] = AT_UPPER
            if self.status[leaving] == AT_UPPER and not np.isfinite(self.ub[leaving]):
                self.status[leaving] = AT_LOWER
            self.basis[r] = q
            self.status[q] = BASIC
            self.pivot(r, alpha)
            degenerate = degenerate + 1 if tmin <= 1e-12 else 0

    # -- dual simplex ------------------------------------------------------------
    def dual(self, cost) -> str:
        stall = 0
        while True:
            if self.iters >= self.max_iter:
                return "iteration-limit"
            xB = self.basic_values()
            lbB, ubB = self.lb[self.basis], self.ub[self.basis]
            below = lbB - xB
            above = xB - ubB
            infeas = np.maximum(below, above)
            if infeas.max(initial=0) <= self.PRIM_TOL:
                return "optimal"
            if stall >= self.STALL:
                r = int(np.flatnonzero(infeas > self.PRIM_TOL)[np.argmin(self.basis[infeas > self.PRIM_TOL])])
            else:
                r = int(np.argmax(infeas))
            up = below[r] > above[r]
            y, d = self.duals(cost)
            alpha_r = self.colsT @ self.Binv[r]
            st = self.status
            movable = (self.ub > self.lb) & (st != BASIC)
            if up:
                elig = ((st == AT_LOWER) & (alpha_r < -self.PIV_TOL)) | ((st == AT_UPPER) & (alpha_r > self.PIV_TOL))
            else:
                elig = ((st == AT_LOWER) & (alpha_r > self.PIV_TOL)) | ((st == AT_UPPER) & (alpha_r < -self.PIV_TOL))
            elig |= (st == AT_ZERO) & (np.abs(alpha_r) > self.PIV_TOL)
            elig &= movable
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                return "infeasible"
            ratios = np.abs(d[idx]) / np.abs(alpha_r[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            if stall >= self.STALL:
                q = int(ties[0])
            else:
                q = int(ties[np.argmax(np.abs(alpha_r[ties]))])
            alpha = self.Binv @ self.column(q)
            leaving = self.basis[r]
            self.status[leaving] = AT_LOWER if up else AT_UPPER
            self.basis[r] = q
            self.status[q] = BASIC
            self.pivot(r, alpha)
            self.iters += 1
            stall = stall + 1 if best <= 1e-12 else 0

    # -- drivers -----------------------------------------------------------------
    def cold(self) -> str:
        self._nonbasic_start()
        self.basis = np.arange(self.n, self.n + self.m)
        self.status[self.basis] = BASIC
        self.Binv = np.eye(self.m)
        xB = self.basic_values()
        slb, sub = self.lb[self.basis], self.ub[self.basis]
        bad = np.flatnonzero((xB < slb - self.PRIM_TOL) | (xB > sub + self.PRIM_TOL))
        n_struct = self.n + self.m
        if bad.size:
            sign = np.where(xB[bad] > sub[bad], 1.0, -1.0)
            art = sp.csc_matrix((sign, (bad, np.arange(bad.size))), shape=(self.m, bad.size))
            self.cols = sp.hstack([self.cols, art], format="csc")
            self.lb = np.concatenate([self.lb, np.zeros(bad.size)])
            self.ub = np.concatenate([self.ub, np.full(bad.size, np.inf)])
            self.c = np.concatenate([self.c, np.zeros(bad.size)])
            slack_ids = self.n + bad
            self.status = np.concatenate([self.status, np.full(bad.size, BASIC, dtype=np.int8)])
            self.status[slack_ids] = np.where(sign > 0, AT_UPPER, AT_LOWER)
            self.basis[bad] = n_struct + np.arange(bad.size)
        self._finalize_cols()
        if bad.size:
            self.refactor()
            cost1 = np.zeros_like(self.c)
            cost1[n_struct:] = 1.0
            res = self.primal(cost1)
            if res != "optimal":
                return res
            x = self.full_x()
            if x[n_struct:].sum() > FEAS_TOL:
                return "infeasible"
            self.ub[n_struct:] = 0.0
            self.status[n_struct:] = np.where(self.status[n_struct:] == BASIC, BASIC, AT_LOWER)
        return self.primal(self.c)

    def warm(self, basis: LpBasis) -> str | None:
        """Run from ``basis``; ``None`` means the basis was unusable."""
        if len(basis.col_status) != self.n or len(basis.row_basic) != self.m:
            return None
        st = np.concatenate([np.asarray(basis.col_status, dtype=np.int8),
                             np.where(basis.row_basic, BASIC, AT_LOWER).astype(np.int8)])
        slack = np.arange(self.n, self.n + self.m)
        nb_slack = slack[~basis.row_basic]
        st[nb_slack] = np.where(np.isfinite(self.lb[nb_slack]), AT_LOWER, AT_UPPER)
        bad_lo = (st == AT_LOWER) & ~np.isfinite(self.lb)
        bad_hi = (st == AT_UPPER) & ~np.isfinite(self.ub)
        st[bad_lo | bad_hi] = np.where(np.isfinite(self.ub[bad_lo | bad_hi]), AT_UPPER, AT_ZERO)
        basic = np.flatnonzero(st == BASIC)
        if basic.size != self.m:
            return None
        self.status = st
        self.basis = basic.astype(np.int64)
        self._finalize_cols()
        try:
            self.refactor()
        except LpError:
            return None
        xB = self.basic_values()
        lbB, ubB = self.lb[self.basis], self.ub[self.basis]
        if np.all(xB >= lbB - self.PRIM_TOL) and np.all(xB <= ubB + self.PRIM_TOL):
            return self.primal(self.c)
        _, d = self.duals(self.c)
        st = self.status
        dual_bad = ((st == AT_LOWER) & (d < -self.DUAL_TOL) & (self.ub > self.lb)) | \
                   ((st == AT_UPPER) & (d > self.DUAL_TOL) & (self.ub > self.lb)) | \
                   ((st == AT_ZERO) & (np.abs(d) > self.DUAL_TOL))
        if dual_bad.any():
            return None
        res = self.dual(self.c)
        if res == "optimal":
            return self.primal(self.c)
        return res if res == "infeasible" else None

    def export_basis(self) -> LpBasis:
        col = self.status[:self.n].copy()
        row_basic = self.status[self.n:self.n + self.m] == BASIC
        if len(self.status) > self.n + self.m:
            # an artificial stuck in the basis at zero stands in for its row's slack
            for r, j in enumerate(self.basis):
                if j >= self.n + self.m:
                    row_basic[int(self.cols[:, j].indices[0])] = True
        return LpBasis(col, row_basic)


def _solve_builtin(model: LpModel, basis: LpBasis | None, max_iter: int | None) -> LpSolution:
    if model.n_vars == 0:
        return _trivial(model, "builtin")
    spx = _Simplex(model, max_iter)
    warm = False
    status = None
    try:
        if basis is not None:
            status = spx.warm(basis)
            if status is None:
                log.warning("warm basis incompatible with model %s; solving cold", model.name)
                spx = _Simplex(model, max_iter)
            else:
                warm = True
        if status is None:
            status = spx.cold()
        if status == "optimal":
            spx.refactor()
    except LpError as e:
        return LpSolution("numerical-error", iterations=spx.iters, backend="builtin", message=str(e))
    sol = LpSolution(status, iterations=spx.iters, backend="builtin", warm_started=warm)
    if status == "optimal":
        x = spx.full_x()[:model.n_vars]
        x = np.clip(x, model.lb, model.ub)
        cost = spx.c.copy()
        y, _ = spx.duals(cost)
        sol.x = x
        sol.y = y
        sol.z = model.c - model.matrix().T @ y
        sol.objective = float(model.c @ x)
        sol.basis = spx.export_basis()
        act = model.matrix() @ x
        s, b = model.senses, model.rhs
        resid = np.where(s == LE, act - b, np.where(s == GE, b - act, np.abs(act - b)))
        if resid.max(initial=0) > FEAS_TOL * (1 + np.abs(b).max(initial=0)):
            sol.status = "numerical-error"
            sol.message = f"primal residual {resid.max():.3g} after final refactor"
    return sol


def _trivial(model: LpModel, backend: str) -> LpSolution:
    s, b = model.senses, model.rhs
    ok = np.all(np.where(s == LE, b >= -FEAS_TOL, np.where(s == GE, b <= FEAS_TOL, np.abs(b) <= FEAS_TOL)))
    if not ok:
        return LpSolution("infeasible", backend=backend)
    return LpSolution("optimal", x=np.zeros(0), y=np.zeros(model.n_rows), z=np.zeros(0), objective=0.0,
                      basis=LpBasis(np.zeros(0, dtype=np.int8), np.ones(model.n_rows, dtype=bool)),
                      backend=backend)


# ---------------------------------------------------------------------------
# HiGHS


def _highs_lp(model: LpModel):
    import highspy

    inf = highspy.kHighsInf
    A = model.matrix().tocsc()
    lp = highspy.HighsLp()
    lp.num_col_ = model.n_vars
    lp.num_row_ = model.n_rows
    lp.col_cost_ = model.c
    lp.col_lower_ = np.where(np.isinf(model.lb), -inf, model.lb)
    lp.col_upper_ = np.where(np.isinf(model.ub), inf, model.ub)
    s, b = model.senses, model.rhs
    lp.row_lower_ = np.where(s == LE, -inf, b)
    lp.row_upper_ = np.where(s == GE, inf, b)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data
    return lp


def _to_highs_basis(model: LpModel, basis: LpBasis):
    import highspy

    S = highspy.HighsBasisStatus
    code = {BASIC: S.kBasic, AT_LOWER: S.kLower, AT_UPPER: S.kUpper, AT_ZERO: S.kZero}
    hb = highspy.HighsBasis()
    hb.col_status = [code[int(v)] for v in basis.col_status]
    rows = []
    for basic, sense in zip(basis.row_basic, model.senses):
        if basic:
            rows.append(S.kBasic)
        else:
            rows.append(S.kLower if sense == GE else S.kUpper if sense == LE else S.kLower)
    hb.row_status = rows
    hb.valid = True
    return hb


def _from_highs_basis(hb) -> LpBasis:
    import highspy

    S = highspy.HighsBasisStatus
    back = {S.kBasic: BASIC, S.kLower: AT_LOWER, S.kUpper: AT_UPPER, S.kZero: AT_ZERO,
            S.kNonbasic: AT_LOWER}
    col = np.array([back[v] for v in hb.col_status], dtype=np.int8)
    row = np.array([v == S.kBasic for v in hb.row_status], dtype=bool)
    return LpBasis(col, row)


def _solve_highs(model: LpModel, basis: LpBasis | None, max_iter: int | None,
                 threads: int = 1, devex: bool = False) -> LpSolution:
    import highspy

    if model.n_vars == 0:
        return _trivial(model, "highs")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", int(threads))
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("solver", "simplex")
    if devex:
        # exact steepest-edge weights cost one solve per row when starting from a given basis;
        # cheaper devex pricing pays off when only a few rows were appended
        h.setOptionValue("simplex_dual_edge_weight_strategy", 1)
    h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL / 10)
    h.setOptionValue("dual_feasibility_tolerance", FEAS_TOL / 10)
    if max_iter is not None:
        h.setOptionValue("simplex_iteration_limit", int(max_iter))
    h.passModel(_highs_lp(model))
    warm = False
    if basis is not None:
        if len(basis.col_status) == model.n_vars and len(basis.row_basic) == model.n_rows:
            st = h.setBasis(_to_highs_basis(model, basis))
            warm = st == highspy.HighsStatus.kOk
        if not warm:
            log.warning("warm basis rejected by HiGHS for %s; solving cold", model.name)
    h.run()
    ms = h.getModelStatus()
    M = highspy.HighsModelStatus
    if ms == M.kUnboundedOrInfeasible:
        h.setOptionValue("presolve", "off")
        h.run()
        ms = h.getModelStatus()
    table = {M.kOptimal: "optimal", M.kInfeasible: "infeasible", M.kUnbounded: "unbounded",
             M.kIterationLimit: "iteration-limit", M.kTimeLimit: "time-limit"}
    status = table.get(ms, "numerical-error")
    info = h.getInfo()
    sol = LpSolution(status, iterations=int(info.simplex_iteration_count), backend="highs",
                     warm_started=warm, message=h.modelStatusToString(ms))
    if status == "optimal":
        s = h.getSolution()
        sol.x = np.array(s.col_value)
        sol.y = np.array(s.row_dual)
        sol.z = np.array(s.col_dual)
        sol.objective = float(model.c @ sol.x)
        sol.basis = _from_highs_basis(h.getBasis())
    return sol


# ---------------------------------------------------------------------------
# entry points


def backend_from_env() -> str:
    name = os.environ.get("JOMATCH_LP_BACKEND", "auto").strip().lower() or "auto"
    if name not in BACKENDS:
        raise LpError(f"JOMATCH_LP_BACKEND={name!r}; expected one of {', '.join(BACKENDS)}")
    return name


def pick_backend(model: LpModel, backend: str | None = None) -> str:
    name = backend or backend_from_env()
    if name not in BACKENDS:
        raise LpError(f"unknown LP backend {name!r}")
    if name == "auto":
        small = model.n_rows <= BUILTIN_MAX_ROWS and model.n_vars <= BUILTIN_MAX_COLS
        return "builtin" if small else "highs"
    return name


def solve(model: LpModel, backend: str | None = None, max_iter: int | None = None,
          threads: int = 1) -> LpSolution:
    return solve_with_basis(model, None, backend=backend, max_iter=max_iter, threads=threads)


def solve_with_basis(model: LpModel, warm_basis: LpBasis | None, backend: str | None = None,
                     max_iter: int | None = None, threads: int = 1) -> LpSolution:
    """Solve ``model``, warm-starting from ``warm_basis`` when it fits.

    A basis from a model with fewer rows is extended with basic slacks for the
    new rows, which is the usual situation after appending cuts.
    """
    name = pick_backend(model, backend)
    devex = False
    if warm_basis is not None and len(warm_basis.row_basic) < model.n_rows:
        devex = model.n_rows - len(warm_basis.row_basic) <= 0.25 * model.n_rows
        warm_basis = warm_basis.extended(model.n_rows)
    elif warm_basis is not None:
        devex = True
    if name == "export-only":
        out = Path(os.environ.get("JOMATCH_LP_EXPORT_DIR", "."))
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{model.name}.lp"
        export_lp_file(model, path)
        return LpSolution("not-solved", backend="export-only", message=str(path))
    if name == "highs":
        return _solve_highs(model, warm_basis, max_iter, threads, devex)
    return _solve_builtin(model, warm_basis, max_iter)


# ---------------------------------------------------------------------------
# LP files

_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) or abs(v) >= 1e15 else str(int(v))


def _terms(names, coefs) -> list[str]:
    return [f"{'-' if c < 0 else '+'} {_fmt(abs(c))} {nm}" for nm, c in zip(names, coefs)]


def _wrap(head: str, terms: list[str], tail: str = "", width: int = 200) -> list[str]:
    lines, cur = [], head
    for t in terms + ([tail] if tail else []):
        if len(cur) + len(t) + 1 > width and cur.strip():
            lines.append(cur)
            cur = "   "
        cur += " " + t
    lines.append(cur)
    return lines


def export_lp_file(model: LpModel, path) -> None:
    """Write ``model`` in CPLEX LP format."""
    names = [model.name_of(j) for j in range(model.n_vars)]
    if any(not _NAME_OK.match(nm) for nm in names):
        names = [f"x{j}" for j in range(model.n_vars)]
    c = model.c
    A = model.matrix()
    out = [f"\\ {model.name}", "Minimize"]
    nz = np.flatnonzero(c)
    if nz.size:
        out += _wrap(" obj:", _terms([names[j] for j in nz], c[nz]))
    elif model.n_vars:
        out.append(f" obj: 0 {names[0]}")
    else:
        out.append(" obj:")
    out.append("Subject To")
    op = {LE: "<=", GE: ">=", EQ: "="}
    for r in range(model.n_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        idx, val = A.indices[lo:hi], A.data[lo:hi]
        terms = _terms([names[j] for j in idx], val) if len(idx) else [f"0 {names[0]}"]
        out += _wrap(f" r{r}:", terms, f"{op[model.senses[r]]} {_fmt(model.rhs[r])}")
    out.append("Bounds")
    for j in range(model.n_vars):
        lo, hi = model.lb[j], model.ub[j]
        if lo == 0 and np.isinf(hi):
            continue
        nm = names[j]
        if np.isinf(lo) and np.isinf(hi):
            out.append(f" {nm} free")
        elif lo == hi:
            out.append(f" {nm} = {_fmt(lo)}")
        else:
            left = "-inf" if np.isinf(lo) else _fmt(lo)
            right = "+inf" if np.isinf(hi) else _fmt(hi)
            out.append(f" {left} <= {nm} <= {right}")
    out.append("End")
    Path(path).write_text("\n".join(out) + "\n")




def _parse_expr(text: str) -> list[tuple[str, float]]:
    terms = []
    for m in re.finditer(r"([+-])?\s*((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][A-Za-z0-9_.]*)", text):
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        terms.append((m.group(3), sign * coef))
    return terms


def _num(tok: str) -> float:
    t = tok.lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def read_lp_file(path) -> LpModel:
    """Read the LP-format subset written by :func:`export_lp_file`."""
    section, buf, stmts = None, "", []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "subject to", "bounds", "end"):
            if buf:
                stmts.append((section, buf))
                buf = ""
            section = low
            continue
        if section in ("subject to", "minimize") and re.match(r"^[A-Za-z_][A-Za-z0-9_.]*\s*:", line) and buf:
            stmts.append((section, buf))
            buf = ""
        if section == "bounds":
            stmts.append((section, line))
        else:
            buf += " " + line
    if buf:
        stmts.append((section, buf))

    names: dict[str, int] = {}
    order: list[str] = []

    def var(nm):
        if nm not in names:
            names[nm] = len(order)
            order.append(nm)
        return names[nm]

    obj_terms, rows, bounds = [], [], []
    for sec, text in stmts:
        body = text.split(":", 1)[1] if ":" in text and sec != "bounds" else text
        if sec == "minimize":
            obj_terms = _parse_expr(body)
            for nm, _ in obj_terms:
                var(nm)
        elif sec == "subject to":
            m = re.match(r"(.*?)(<=|>=|=)\s*(\S+)\s*$", body)
            if not m:
                raise ValueError(f"cannot parse row: {text.strip()}")
            terms = _parse_expr(m.group(1))
            for nm, _ in terms:
                var(nm)
            rows.append((terms, m.group(2), float(m.group(3))))
        elif sec == "bounds":
            bounds.append(text)
    for text in bounds:
        toks = text.split()
        if len(toks) == 2 and toks[1].lower() == "free":
            var(toks[0])
    lb = {}
    ub = {}
    for text in bounds:
        toks = text.split()
        if len(toks) == 2 and toks[1].lower() == "free":
            lb[toks[0]], ub[toks[0]] = -math.inf, math.inf
        elif len(toks) == 3 and toks[1] == "=":
            var(toks[0])
            lb[toks[0]] = ub[toks[0]] = float(toks[2])
        elif len(toks) == 5:
            var(toks[2])
            lb[toks[2]], ub[toks[2]] = _num(toks[0]), _num(toks[4])
        elif len(toks) == 3:
            var(toks[0])
            (lb if toks[1] == ">=" else ub)[toks[0]] = _num(toks[2])
        else:
            raise ValueError(f"cannot parse bound: {text}")
    model = LpModel(Path(path).stem)
    n = len(order)
    cost = np.zeros(n)
    for nm, cf in obj_terms:
        cost[names[nm]] += cf
    model.add_variables(n, lb=[lb.get(nm, 0.0) for nm in order], ub=[ub.get(nm, math.inf) for nm in order],
                        cost=cost, names=order)
    for terms, op, rhs in rows:
        acc: dict[int, float] = {}
        for nm, cf in terms:
            acc[names[nm]] = acc.get(names[nm], 0.0) + cf
        keep = [(j, v) for j, v in acc.items() if v != 0]
        model.add_row([j for j, _ in keep], [v for _, v in keep], op, rhs)
    return model
