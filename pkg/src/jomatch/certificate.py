"""Deterministic recovery analysis for permutation synchronization.

The cost array is held as ``A[i, j]`` of shape ``(n, n, d, d)`` with
``A[j, i] = A[i, j].T`` and a zero diagonal.  Dual multipliers of the three
triangle rows of the permutation LP follow the row order used there::

    lam1:  X_lt(i,j) + X_tq(j,k) - X_lq(i,k) <= 1
    lam2:  X_lt(i,j) - X_tq(j,k) + X_lq(i,k) <= 1
    lam3: -X_lt(i,j) + X_tq(j,k) + X_lq(i,k) <= 1

each stored as an array indexed ``[triple_id, l, t, q]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .instance import Instance

STRICT_TOL = 1e-12
DUAL_TOL = 1e-9


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class CertParams:
    alpha: float = 1.172
    beta: float = 1.657

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")


def cost_array(inst: Instance) -> np.ndarray:
    """Full symmetric-access cost array; requires a complete permutation-sync instance."""
    cfg = inst.config
    if not inst.is_complete:
        raise CertificateError("the certificate needs a complete map graph")
    if not inst.is_permutation_sync:
        raise CertificateError("the certificate needs equal sizes and permutation input blocks")
    d = cfg.sizes[0]
    if d < 2:
        raise CertificateError("the certificate needs d >= 2")
    A = np.zeros((cfg.n, cfg.n, d, d))
    for (i, j), blk in inst.input.items():
        A[i, j] = 1 - 2 * blk
        A[j, i] = A[i, j].T
    return A


# ---------------------------------------------------------------------------
# kappa and delta: literal scalar versions


def kappa_scalar(A: np.ndarray, i: int, j: int, t: int, params: CertParams = CertParams()) -> float:
    n, d = A.shape[0], A.shape[2]
    al, be = params.alpha, params.beta
    first = 0.0
    for l in range(d):
        if l == t:
            continue
        for k in range(n):
            if k in (i, j):
                continue
            first += min(A[k, i, l, t] / al + A[k, j, t, t] / (be * d),
                         A[k, j, l, t] / al + A[k, i, t, t] / (be * d))
    first /= n
    s_i = sum(A[k, i, t, t] for k in range(n) if k != i)
    s_j = sum(A[k, j, t, t] for k in range(n) if k != j)
    second = (1 / n) * (1 / (2 * al) - (d - 1) / (2 * be * d)) * (s_i + s_j) - (d - 2) / al + 1
    third = 0.0
    for l in range(d):
        if l == t:
            continue
        third += (A[i, j, t, l] + A[j, i, t, l]) / al + 2 * A[i, j, t, t] / (be * d)
    third /= 2 * n
    return first + second + third


def delta_scalar(A: np.ndarray, i: int, j: int, t: int, q: int, params: CertParams = CertParams()) -> float:
    """``delta_{t->q}^{i->j}``; ``i`` and ``j`` may come in either order."""
    n, d = A.shape[0], A.shape[2]
    al, be = params.alpha, params.beta
    total = 0.0
    for k in range(n):
        if k in (i, j) or A[k, i, t, t] != -1:
            continue
        total += (A[k, j, t, q] - A[i, j, t, q]) / al + (A[i, j, t, t] - A[k, j, t, t]) / (be * d)
    return total / n


# ---------------------------------------------------------------------------
# vectorized tables


def kappa_table(A: np.ndarray, params: CertParams = CertParams()) -> np.ndarray:
    """``K[i, j, t]`` for every ordered pair ``i != j`` (zero on the diagonal)."""
    n, d = A.shape[0], A.shape[2]
    al, be = params.alpha, params.beta
    diag = np.einsum("abtt->abt", A)                      # a_tt(a, b)
    offdiag = ~np.eye(d, dtype=bool)
    K = np.zeros((n, n, d))
    col_sum = diag.sum(axis=0)                            # sum_k a_tt(k, b), diagonal rows are zero
    c2 = 1 / (2 * al) - (d - 1) / (2 * be * d)
    for i in range(n):
        # option 1: a_lt(k,i)/al + a_tt(k,j)/(be d); option 2: a_lt(k,j)/al + a_tt(k,i)/(be d)
        o1 = A[:, i, :, :][:, None, :, :] / al + diag[:, :, None, :] / (be * d)          # [k, j, l, t]
        o2 = A[:, :, :, :] / al + diag[:, i][:, None, None, :] / (be * d)                 # [k, j, l, t]
        m = np.minimum(o1, o2)
        m = np.where(offdiag.T[None, None], m, 0.0)                                       # drop l == t
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        per_kj = m.sum(axis=2)                                                            # [k, j, t]
        keep = mask[:, None] & ~np.eye(n, dtype=bool)                                     # k != i, k != j
        first = (per_kj * keep[:, :, None]).sum(axis=0) / n                               # [j, t]
        second = c2 * (col_sum[i][None, :] + col_sum) / n - (d - 2) / al + 1              # [j, t]
        sym = A[i] + A[:, i]                                                              # a_tl(i,j) + a_tl(j,i)
        third = (np.where(offdiag[None], sym, 0.0).sum(axis=2) / al
                 + 2 * (d - 1) * diag[i] / (be * d)) / (2 * n)
        K[i] = first + second + third
        K[i, i] = 0.0
    return K


def delta_table(A: np.ndarray, params: CertParams = CertParams()) -> np.ndarray:
    """``D[i, j, t, q] = delta_{t->q}^{i->j}`` for ordered pairs ``i != j``."""
    n, d = A.shape[0], A.shape[2]
    al, be = params.alpha, params.beta
    diag = np.einsum("abtt->abt", A)
    D = np.zeros((n, n, d, d))
    for i in range(n):
        guard = (diag[:, i] == -1)                                                        # [k, t]
        term = ((A - A[i][None]) / al
                + (diag[i][None, :, :, None] - diag[:, :, :, None]) / (be * d))           # [k, j, t, q]
        valid = np.ones((n, n), dtype=bool)
        valid[i, :] = False
        valid[np.arange(n), np.arange(n)] = False                                         # k != j
        w = guard[:, None, :, None] & valid[:, :, None, None]
        D[i] = np.where(w, term, 0.0).sum(axis=0) / n
        D[i, i] = 0.0
    return D


# ---------------------------------------------------------------------------
# conditions


CASES = ("i", "ii", "iii", "iv", "v")


def classify_case(att: float, aqq: float, atq: float) -> int | None:
    pattern = (att, aqq, atq)
    table = {(1, 1, 1): 0, (1, 1, -1): 1, (-1, -1, 1): 2, (1, -1, 1): 3, (-1, 1, 1): 4}
    return table.get(tuple(int(v) for v in pattern))


def condition_margins(case: int, kt: float, kq: float, dtq: float, dqt: float) -> tuple[float, ...]:
    """Left-hand sides minus right-hand sides of the inequalities of one case."""
    if case == 0:
        return (dtq, dqt)
    if case == 1:
        return (dtq - 1, dqt - 1)
    if case == 2:
        h = 0.5 * (dtq + dqt)
        return (kt + h, kq + h)
    if case == 3:
        return (kq + dtq + dqt,)
    return (kt + dtq + dqt,)


@dataclass
class CertificateReport:
    n: int
    d: int
    params: CertParams
    kappa: np.ndarray | None = None
    delta: np.ndarray | None = None
    case_counts: dict = field(default_factory=dict)
    verdict_counts: dict = field(default_factory=dict)
    all_strict: bool = False
    all_hold: bool = False
    worst_margin: float = np.inf
    first_failure: tuple | None = None
    # dual part
    duals_built: bool = False
    r: np.ndarray | None = None
    mu: np.ndarray | None = None
    lam: tuple | None = None
    dual_objective: float = np.nan
    primal_objective: float = np.nan
    gap: float = np.nan
    min_lambda: float = np.nan
    min_mu: float = np.nan
    max_stationarity: float = np.nan
    max_complementarity: float = np.nan
    dual_feasible: bool = False
    verified: bool = False
    first_violation: str | None = None
    sigma_minus_kappa: float = np.nan

    def summary(self) -> dict:
        out = {"n": self.n, "d": self.d, "alpha": self.params.alpha, "beta": self.params.beta,
               "all_strict": self.all_strict, "all_hold": self.all_hold,
               "worst_margin": self.worst_margin,
               **{f"case_{CASES[c]}": self.case_counts.get(c, 0) for c in range(5)},
               **{k: v for k, v in self.verdict_counts.items()}}
        if self.duals_built:
            out.update({"dual_objective": self.dual_objective, "primal_objective": self.primal_objective,
                        "gap": self.gap, "dual_feasible": self.dual_feasible, "verified": self.verified})
        return out


def check_conditions(inst: Instance, params: CertParams = CertParams()) -> CertificateReport:
    A = cost_array(inst)
    n, d = A.shape[0], A.shape[2]
    K = kappa_table(A, params)
    D = delta_table(A, params)
    rep = CertificateReport(n, d, params, kappa=K, delta=D)
    counts = {c: 0 for c in range(5)}
    verdicts = {"strict": 0, "weak": 0, "fail": 0}
    worst = np.inf
    first_fail = None
    for i, j in combinations(range(n), 2):
        for t in range(d):
            for q in range(d):
                if t == q:
                    continue
                case = classify_case(A[i, j, t, t], A[i, j, q, q], A[i, j, t, q])
                if case is None:
                    raise CertificateError(f"sign pattern at ({i},{j},{t},{q}) fits no case")
                counts[case] += 1
                m = min(condition_margins(case, K[i, j, t], K[i, j, q], D[i, j, t, q], D[j, i, q, t]))
                worst = min(worst, m)
                if m > STRICT_TOL:
                    verdicts["strict"] += 1
                elif m >= -STRICT_TOL:
                    verdicts["weak"] += 1
                else:
                    verdicts["fail"] += 1
                    if first_fail is None:
                        first_fail = (i, j, t, q, CASES[case], m)
    rep.case_counts = counts
    rep.verdict_counts = verdicts
    rep.worst_margin = float(worst)
    rep.all_strict = verdicts["weak"] == 0 and verdicts["fail"] == 0
    rep.all_hold = verdicts["fail"] == 0
    rep.first_failure = first_fail
    return rep


# ---------------------------------------------------------------------------
# dual certificate


def _triple_lookup(n: int):
    T = np.array(list(combinations(range(n), 3)), dtype=np.int64).reshape(-1, 3)
    tid = -np.ones((n, n, n), dtype=np.int64)
    tid[T[:, 0], T[:, 1], T[:, 2]] = np.arange(len(T))
    return T, tid


def build_lambdas(A: np.ndarray, params: CertParams = CertParams()):
    """Nonnegative triangle multipliers built from the max{., 0} assignments.

    Only pairs and labels with ``a_tt(i,j) = -1`` receive nonzero values.  The
    three index regions (``k < i``, ``i < k < j``, ``k > j``) write disjoint
    entries, so plain assignment is enough.
    """
    n, d = A.shape[0], A.shape[2]
    al, be = params.alpha, params.beta
    T, tid = _triple_lookup(n)
    L1 = np.zeros((len(T), d, d, d))
    L2 = np.zeros_like(L1)
    L3 = np.zeros_like(L1)
    diag = np.einsum("abtt->abt", A)
    iu, ju = np.triu_indices(n, 1)
    sel = diag[iu, ju] == -1                                   # [pair, t]
    P, Tt = np.nonzero(sel)
    if P.size == 0:
        return T, (L1, L2, L3)
    I, J = iu[P], ju[P]
    # x[m, k, q] for the m-th (i, j, t)
    x = ((A[J, :, Tt, :] - A[I, :, Tt, :]) / al
         + ((diag[I, :, Tt] - diag[J, :, Tt]) / (be * d))[:, :, None])
    pos, neg = np.maximum(x, 0) / n, np.maximum(-x, 0) / n
    m_idx, k_idx, q_idx = np.meshgrid(np.arange(len(P)), np.arange(n), np.arange(d), indexing="ij")
    m_idx, k_idx, q_idx = m_idx.ravel(), k_idx.ravel(), q_idx.ravel()
    ii, jj, tt = I[m_idx], J[m_idx], Tt[m_idx]
    keep = (q_idx != tt) & (k_idx != ii) & (k_idx != jj)
    m_idx, k_idx, q_idx, ii, jj, tt = (v[keep] for v in (m_idx, k_idx, q_idx, ii, jj, tt))
    pv, nv = pos[m_idx, k_idx, q_idx], neg[m_idx, k_idx, q_idx]
    r = k_idx < ii
    h = tid[k_idx[r], ii[r], jj[r]]
    L1[h, q_idx[r], tt[r], tt[r]] = pv[r]
    L3[h, q_idx[r], tt[r], tt[r]] = nv[r]
    r = (k_idx > ii) & (k_idx < jj)
    h = tid[ii[r], k_idx[r], jj[r]]
    L2[h, tt[r], q_idx[r], tt[r]] = pv[r]
    L3[h, tt[r], q_idx[r], tt[r]] = nv[r]
    r = k_idx > jj
    h = tid[ii[r], jj[r], k_idx[r]]
    L1[h, tt[r], tt[r], q_idx[r]] = nv[r]
    L2[h, tt[r], tt[r], q_idx[r]] = pv[r]
    return T, (L1, L2, L3)


def build_lambdas_loop(A: np.ndarray, params: CertParams = CertParams()):
    """Reference loop version of :func:`build_lambdas`."""
    n, d = A.shape[0], A.shape[2]
    al, be = params.alpha, params.beta
    T, tid = _triple_lookup(n)
    L1 = np.zeros((len(T), d, d, d))
    L2 = np.zeros_like(L1)
    L3 = np.zeros_like(L1)
    for i, j in combinations(range(n), 2):
        for t in range(d):
            if A[i, j, t, t] != -1:
                continue
            for k in range(n):
                if k in (i, j):
                    continue
                for q in range(d):
                    if q == t:
                        continue
                    x = (A[j, k, t, q] - A[i, k, t, q]) / al + (A[i, k, t, t] - A[j, k, t, t]) / (be * d)
                    pos, neg = max(x, 0.0) / n, max(-x, 0.0) / n
                    if k < i:
                        h = tid[k, i, j]
                        L1[h, q, t, t], L3[h, q, t, t] = pos, neg
                    elif k < j:
                        h = tid[i, k, j]
                        L2[h, t, q, t], L3[h, t, q, t] = pos, neg
                    else:
                        h = tid[i, j, k]
                        L1[h, t, t, q], L2[h, t, t, q] = neg, pos
    return T, (L1, L2, L3)


def lambda_transpose(T: np.ndarray, lams, n: int, d: int) -> np.ndarray:
    """``G[i, j] = (C^T lambda)`` restricted to the variables of pair ``i < j``."""
    L1, L2, L3 = lams
    G = np.zeros((n, n, d, d))
    np.add.at(G, (T[:, 0], T[:, 1]), (L1 + L2 - L3).sum(axis=3))   # X_lt(i,j)
    np.add.at(G, (T[:, 1], T[:, 2]), (L1 - L2 + L3).sum(axis=1))   # X_tq(j,k)
    np.add.at(G, (T[:, 0], T[:, 2]), (-L1 + L2 + L3).sum(axis=2))  # X_lq(i,k)
    return G


def build_dual_certificate(inst: Instance, params: CertParams = CertParams(),
                           report: CertificateReport | None = None) -> CertificateReport:
    """Construct ``(r, c = r, lambda, mu)`` and verify it as a dual solution for the ground truth."""
    A = cost_array(inst)
    n, d = A.shape[0], A.shape[2]
    rep = report if report is not None else check_conditions(inst, params)
    T, lams = build_lambdas(A, params)
    G = lambda_transpose(T, lams, n, d)
    iu, ju = np.triu_indices(n, 1)
    a = A[iu, ju]                                   # [pair, t, q]
    g = G[iu, ju]
    a_diag = np.einsum("ptt->pt", a)
    g_diag = np.einsum("ptt->pt", g)
    r = -(a_diag + g_diag) / 2
    mu = a + r[:, :, None] + r[:, None, :] + g
    eye = np.eye(d, dtype=bool)
    stationarity = np.abs(np.where(eye[None], mu, 0.0)).max(initial=0.0)
    mu_off = np.where(eye[None], np.inf, mu)
    L1, L2, L3 = lams
    # triangle rows at the identity ground truth: value [l==t] + [t==q] - [l==q] etc.
    l, t, q = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
    e = lambda u, v: (u == v).astype(float)
    row1 = e(l, t) + e(t, q) - e(l, q)
    row2 = e(l, t) - e(t, q) + e(l, q)
    row3 = -e(l, t) + e(t, q) + e(l, q)
    comp = max(float((L1 * (1 - row1)).max(initial=0)), float((L2 * (1 - row2)).max(initial=0)),
               float((L3 * (1 - row3)).max(initial=0)))
    rep.duals_built = True
    rep.r = r
    rep.mu = mu
    rep.lam = (T, lams)
    rep.min_lambda = float(min(L.min(initial=0.0) for L in lams))
    rep.min_mu = float(mu_off.min(initial=np.inf)) if d > 1 else 0.0
    rep.max_stationarity = float(stationarity)
    rep.max_complementarity = comp
    rep.dual_objective = float(-sum(L.sum() for L in lams) - 2 * r.sum())
    rep.primal_objective = float(a_diag.sum())
    rep.gap = abs(rep.dual_objective - rep.primal_objective)
    # Sigma_t(i,j) = G_tt for labels with a_tt = -1, compared with 2 - 2 kappa
    neg = a_diag == -1
    if neg.any():
        K = rep.kappa if rep.kappa is not None else kappa_table(A, params)
        k_pairs = K[iu, ju]
        rep.sigma_minus_kappa = float(np.abs(g_diag[neg] - (2 - 2 * k_pairs[neg])).max())
    checks = [
        ("lambda >= 0", rep.min_lambda >= -DUAL_TOL),
        ("mu >= 0", rep.min_mu >= -DUAL_TOL),
        ("diagonal stationarity", rep.max_stationarity <= DUAL_TOL),
        ("complementary slackness", rep.max_complementarity <= DUAL_TOL),
    ]
    rep.first_violation = next((name for name, ok in checks if not ok), None)
    rep.dual_feasible = rep.first_violation is None
    rep.verified = rep.dual_feasible and rep.gap <= 1e-6 * (1 + abs(rep.primal_objective))
    if rep.dual_feasible and rep.first_violation is None and not rep.verified:
        rep.first_violation = "duality gap"
    if rep.first_violation == "mu >= 0":
        p, tt, qq = np.unravel_index(np.argmin(mu_off), mu_off.shape)
        rep.first_violation = f"mu >= 0 at pair ({iu[p] + 1},{ju[p] + 1}) t={tt + 1} q={qq + 1}"
    return rep


def dual_sigma(A: np.ndarray, params: CertParams = CertParams()) -> np.ndarray:
    """``Sigma_t(i,j)`` from the constructed multipliers, indexed ``[pair, t]``."""
    n, d = A.shape[0], A.shape[2]
    T, lams = build_lambdas(A, params)
    G = lambda_transpose(T, lams, n, d)
    iu, ju = np.triu_indices(n, 1)
    return np.einsum("ptt->pt", G[iu, ju])


# ---------------------------------------------------------------------------
# recovery threshold


def threshold_constraints(p, alpha, beta, d):
    """The three polynomial constraints (each must be >= 0), broadcast over inputs."""
    p, al, be = np.asarray(p, float), np.asarray(alpha, float), np.asarray(beta, float)
    c1 = p / be + (1 - p) * (1 / (be * d) - 1 / al)
    c2 = (p + (1 - p) / d) * (p / (be * d) + (1 / (be * d) - 1 / al) * (1 - p) / d + 1 / al) - 0.5
    c3 = (2 * (p ** 2 / be + (1 / al - 1 / be) * p + (0.5 - 1 / al))
          + (4 / al - 2 / be) * (p - 1) ** 2 * (d - 1) / d ** 2 + 2 * p / (be * d))
    return c1, c2, c3


def threshold_constraints_limit(p, alpha, beta):
    """Constraints as ``d -> infinity``."""
    p, al, be = np.asarray(p, float), np.asarray(alpha, float), np.asarray(beta, float)
    c1 = p / be - (1 - p) / al
    c2 = p / al - 0.5
    c3 = 2 * (p ** 2 / be + (1 / al - 1 / be) * p + (0.5 - 1 / al))
    return c1, c2, c3


def _feasible(p, al, be, d, tol=0.0):
    c = threshold_constraints(p, al, be, d)
    return (c[0] >= -tol) & (c[1] >= -tol) & (c[2] >= -tol)


P_LO, P_HI = 0.25, 1.0


def min_feasible_p(alpha, beta, d, scan_step: float = 1e-3, bisect_iters: int = 30) -> np.ndarray:
    """Smallest feasible ``p`` in ``[1/4, 1]`` for each ``(alpha, beta)``; ``inf`` when none.

    A scan locates the first feasible grid point, then bisection pins the
    boundary inside the preceding step.
    """
    al = np.atleast_1d(np.asarray(alpha, float))
    be = np.atleast_1d(np.asarray(beta, float))
    grid = np.arange(P_LO, P_HI + scan_step / 2, scan_step)
    grid[-1] = min(grid[-1], P_HI)
    ok = _feasible(grid[None, :], al[:, None], be[:, None], d)
    has = ok.any(axis=1)
    first = np.argmax(ok, axis=1)
    hi = grid[first]
    lo = np.where(first > 0, grid[np.maximum(first - 1, 0)], hi)
    need = has & (first > 0)
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        f = _feasible(mid, al, be, d)
        hi = np.where(need & f, mid, hi)
        lo = np.where(need & ~f, mid, lo)
    return np.where(has, hi, np.inf)


@dataclass
class ThresholdResult:
    d: int
    p_star: float
    alpha: float
    beta: float


def recovery_threshold(d: int, step: float = 0.005, lo: float = 0.05, hi: float = 2.0,
                       refine_rounds: int = 3, scan_step: float = 1e-3) -> ThresholdResult:
    """Minimize ``p`` over ``(alpha, beta, p)`` subject to the threshold constraints.

    Dense ``(alpha, beta)`` grid with ``alpha <= beta``, then repeated local
    grid refinement around the incumbent.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    if not _feasible(1.0, 1.0, 1.0, d):
        raise RuntimeError("threshold problem infeasible at p = alpha = beta = 1")
    axis = np.arange(lo, hi + step / 2, step)
    best = (np.inf, np.nan, np.nan)
    for a in axis:
        bs = axis[axis >= a - 1e-12]
        ps = min_feasible_p(np.full_like(bs, a), bs, d, scan_step)
        k = int(np.argmin(ps))
        if ps[k] < best[0]:
            best = (float(ps[k]), float(a), float(bs[k]))
    p_best, a_best, b_best = best
    width = step
    for _ in range(refine_rounds):
        fine = np.linspace(-width, width, 41)
        A_, B_ = np.meshgrid(a_best + fine, b_best + fine, indexing="ij")
        mask = (A_ > 0) & (A_ <= B_) & (B_ <= hi)
        ps = min_feasible_p(A_[mask], B_[mask], d, scan_step / 10)
        k = int(np.argmin(ps))
        if ps[k] <= p_best:
            p_best, a_best, b_best = float(ps[k]), float(A_[mask][k]), float(B_[mask][k])
        width /= 10
    return ThresholdResult(d, p_best, a_best, b_best)
