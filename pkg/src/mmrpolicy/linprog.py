"""Dense two-phase primal simplex with dual extraction, plus branch-and-bound.

Problems here are small (tens of variables, at most a few hundred rows), so
everything is a dense numpy tableau.  The solver reports Lagrange multipliers
with the sign convention

* maximise:  c = A_ub' lam + A_eq' eta - sig_lo + sig_up
* minimise: -c = A_ub' lam + A_eq' eta - sig_lo + sig_up

with ``lam, sig_lo, sig_up >= 0``, so that in both senses ``lam`` is the
sensitivity of the *maximised* objective to relaxing a ``<=`` row.  The dual
objective ``b_ub' lam + b_eq' eta - lo' sig_lo + up' sig_up`` equals the
primal value for a maximisation and its negative for a minimisation.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
OPT_TOL = 1e-10
INT_TOL = 1e-6


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class NumericalFailure(RuntimeError):
    """Simplex could not reach a verified optimal basis."""


class NodeLimitExceeded(RuntimeError):
    """Branch-and-bound explored more nodes than allowed."""


def _as2d(a, ncols):
    if a is None:
        return np.zeros((0, ncols))
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, ncols)


@dataclass
class LinearProgram:
    """``sense`` c'z subject to A_ub z <= b_ub, A_eq z = b_eq, lower <= z <= upper.

    ``lower`` defaults to 0 and ``upper`` to +inf, as in most LP texts.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub = _as2d(self.A_ub, n)
        self.b_ub = np.asarray([] if self.b_ub is None else self.b_ub, dtype=float).ravel()
        self.A_eq = _as2d(self.A_eq, n)
        self.b_eq = np.asarray([] if self.b_eq is None else self.b_eq, dtype=float).ravel()
        self.lower = np.zeros(n) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError("constraint matrix and right-hand side sizes disagree")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("bounds must admit a finite value")

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    lam: np.ndarray | None = None
    eta: np.ndarray | None = None
    sig_lo: np.ndarray | None = None
    sig_up: np.ndarray | None = None
    iterations: int = 0
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def dual_objective(self, lp: LinearProgram) -> float:
        lo = np.where(np.isfinite(lp.lower), lp.lower, 0.0)
        up = np.where(np.isfinite(lp.upper), lp.upper, 0.0)
        val = lp.b_ub @ self.lam + lp.b_eq @ self.eta - lo @ self.sig_lo + up @ self.sig_up
        return float(val if lp.maximize else -val)

    def stationarity_residual(self, lp: LinearProgram) -> float:
        g = lp.A_ub.T @ self.lam + lp.A_eq.T @ self.eta - self.sig_lo + self.sig_up
        target = lp.c if lp.maximize else -lp.c
        return float(np.max(np.abs(g - target), initial=0.0))

    def primal_residual(self, lp: LinearProgram) -> float:
        z = self.x
        parts = [np.max(lp.A_ub @ z - lp.b_ub, initial=0.0),
                 np.max(np.abs(lp.A_eq @ z - lp.b_eq), initial=0.0),
                 np.max(lp.lower - z, initial=0.0),
                 np.max(z - lp.upper, initial=0.0)]
        return float(max(parts))

    def complementarity_residual(self, lp: LinearProgram) -> float:
        z = self.x
        slack = lp.b_ub - lp.A_ub @ z
        res = [np.max(np.abs(self.lam * slack), initial=0.0)]
        fin_lo = np.isfinite(lp.lower)
        fin_up = np.isfinite(lp.upper)
        res.append(np.max(np.abs(self.sig_lo[fin_lo] * (z - lp.lower)[fin_lo]), initial=0.0))
        res.append(np.max(np.abs(self.sig_up[fin_up] * (lp.upper - z)[fin_up]), initial=0.0))
        return float(max(res))


# ---------------------------------------------------------------------------
# standard-form reduction


@dataclass
class _StandardForm:
    A: np.ndarray           # rows x cols, b >= 0 after sign flips
    b: np.ndarray
    cost: np.ndarray
    T: np.ndarray           # z = z0 + T x  (only on non-fixed z)
    z0: np.ndarray
    flip: np.ndarray        # +-1 per row
    n_x: int                # structural columns in x
    n_ub: int
    n_eq: int
    bound_vars: np.ndarray  # z index for each upper-bound row
    slack_col: np.ndarray   # column of row's slack, -1 for equality rows
    const: float = 0.0


def _standardize(lp: LinearProgram) -> _StandardForm:
    n = lp.n
    cmin = -lp.c if lp.maximize else lp.c
    lo, up = lp.lower, lp.upper
    cols = []   # (z index, sign)
    z0 = np.zeros(n)
    bound_vars = []
    for j in range(n):
        if lo[j] == up[j]:
            z0[j] = lo[j]
        elif np.isfinite(lo[j]):
            z0[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(up[j]):
                bound_vars.append(j)
        elif np.isfinite(up[j]):
            z0[j] = up[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    n_x = len(cols)
    T = np.zeros((n, n_x))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    bound_vars = np.array(bound_vars, dtype=int)
    n_ub, n_eq, n_bd = lp.A_ub.shape[0], lp.A_eq.shape[0], bound_vars.size
    rows = n_ub + n_eq + n_bd
    n_slack = n_ub + n_bd
    A = np.zeros((rows, n_x + n_slack))
    b = np.zeros(rows)
    A[:n_ub, :n_x] = lp.A_ub @ T
    b[:n_ub] = lp.b_ub - lp.A_ub @ z0
    A[n_ub:n_ub + n_eq, :n_x] = lp.A_eq @ T
    b[n_ub:n_ub + n_eq] = lp.b_eq - lp.A_eq @ z0
    col_of = {j: k for k, (j, s) in enumerate(cols) if s > 0}
    for r, j in enumerate(bound_vars):
        A[n_ub + n_eq + r, col_of[j]] = 1.0
        b[n_ub + n_eq + r] = up[j] - lo[j]
    slack_col = np.full(rows, -1)
    ineq_rows = np.r_[np.arange(n_ub), n_ub + n_eq + np.arange(n_bd)]
    for s, r in enumerate(ineq_rows):
        A[r, n_x + s] = 1.0
        slack_col[r] = n_x + s
    flip = np.where(b < 0, -1.0, 1.0)
    A *= flip[:, None]
    b *= flip
    cost = np.zeros(A.shape[1])
    cost[:n_x] = T.T @ cmin
    return _StandardForm(A, b, cost, T, z0, flip, n_x, n_ub, n_eq, bound_vars,
                         slack_col, float(cmin @ z0))


# ---------------------------------------------------------------------------
# tableau simplex


def _pivot(T, r, e):
    T[r] /= T[r, e]
    col = T[:, e].copy()
    col[r] = 0.0
    nz = np.flatnonzero(col)
    T[nz] -= col[nz, None] * T[r]


def _iterate(T, basis, allowed, max_iter, bland_after):
    """Run simplex pivots on T (last row = reduced costs, last col = rhs).

    Returns "optimal" or "unbounded" and the number of pivots performed.
    """
    m = T.shape[0] - 1
    it = 0
    while True:
        d = T[-1, :-1]
        cand = np.where(allowed & (d < -OPT_TOL))[0]
        if cand.size == 0:
            return "optimal", it
        bland = it >= bland_after
        e = cand[0] if bland else cand[np.argmin(d[cand])]
        colv = T[:m, e]
        pos = colv > PIVOT_TOL
        if not pos.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(T[:m, -1][pos], 0.0) / colv[pos]
        best = ratios.min()
        ties = np.where(ratios <= best + 1e-12 * (1.0 + best))[0]
        if bland:
            r = ties[np.argmin(np.asarray(basis)[ties])]
        else:
            r = ties[np.argmax(colv[ties])]
        _pivot(T, r, e)
        basis[r] = e
        it += 1
        if it > max_iter:
            raise NumericalFailure("simplex iteration limit reached")


def _refactor(A, b, cost, basis):
    """Rebuild a phase-2 tableau from scratch for the given basis."""
    B = A[:, basis]
    try:
        body = np.linalg.solve(B, np.column_stack([A, b]))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular basis") from exc
    m, ncol = A.shape
    T = np.zeros((m + 1, ncol + 1))
    T[:m] = body
    cb = cost[basis]
    T[-1, :-1] = cost - cb @ body[:, :-1]
    T[-1, -1] = -cb @ body[:, -1]
    return T


def _solve_standard(sf: _StandardForm):
    """Two-phase simplex on min cost'x, Ax=b, x>=0.  Returns (status, x, y, iters)."""
    A, b, cost = sf.A, sf.b, sf.cost
    m, ncol = A.shape
    if m == 0:
        if np.any(cost < -OPT_TOL):
            return Status.UNBOUNDED, None, None, 0
        return Status.OPTIMAL, np.zeros(ncol), np.zeros(0), 0

    # Phase 1: artificials on rows whose slack is not a +1 identity column.
    basis = []
    art_rows = []
    for r in range(m):
        s = sf.slack_col[r]
        if s >= 0 and sf.flip[r] > 0:
            basis.append(s)
        else:
            basis.append(-1)
            art_rows.append(r)
    n_art = len(art_rows)
    T = np.zeros((m + 1, ncol + n_art + 1))
    T[:m, :ncol] = A
    T[:m, -1] = b
    for k, r in enumerate(art_rows):
        T[r, ncol + k] = 1.0
        basis[r] = ncol + k
    scale = 1.0 + np.max(np.abs(b), initial=0.0)
    bland_after = 5 * (m + ncol)
    max_iter = 50 * (m + ncol) + 1000
    iters = 0
    if n_art:
        T[-1, :ncol] = -T[art_rows, :ncol].sum(axis=0)
        T[-1, -1] = -b[art_rows].sum()
        allowed = np.ones(ncol + n_art, dtype=bool)
        _, it = _iterate(T, basis, allowed, max_iter, bland_after)
        iters += it
        if -T[-1, -1] > FEAS_TOL * scale:
            return Status.INFEASIBLE, None, None, iters
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= ncol:
                row = T[r, :ncol]
                cands = np.where(np.abs(row) > 1e-9)[0]
                if cands.size:
                    e = cands[np.argmax(np.abs(row[cands]))]
                    _pivot(T, r, e)
                    basis[r] = e
                else:
                    keep[r] = False
        rows = np.where(keep)[0]
        basis = [basis[r] for r in rows]
        A_red, b_red = A[rows], b[rows]
    else:
        rows = np.arange(m)
        A_red, b_red = A, b

    # Phase 2, refactorised from the basis to shed phase-1 drift.
    allowed = np.ones(ncol, dtype=bool)
    status = "optimal"
    for _ in range(6):
        T = _refactor(A_red, b_red, cost, basis)
        status, it = _iterate(T, basis, allowed, max_iter, bland_after)
        iters += it
        if status == "unbounded":
            return Status.UNBOUNDED, None, None, iters
        B = A_red[:, basis]
        xb = np.linalg.solve(B, b_red)
        y = np.linalg.solve(B.T, cost[basis])
        red = cost - A_red.T @ y
        if xb.min(initial=0.0) >= -FEAS_TOL * scale and red.min() >= -OPT_TOL * (1 + np.abs(cost).max()):
            break
        if it == 0 and xb.min(initial=0.0) < -FEAS_TOL * scale:
            raise NumericalFailure("basis lost primal feasibility")
    else:
        raise NumericalFailure("could not verify optimal basis")
    x = np.zeros(ncol)
    x[basis] = np.maximum(xb, 0.0)
    y_full = np.zeros(m)
    y_full[rows] = y
    return Status.OPTIMAL, x, y_full, iters


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve a linear program; on optimality also return Lagrange multipliers."""
    sf = _standardize(lp)
    status, xs, y, iters = _solve_standard(sf)
    if status is not Status.OPTIMAL:
        return LpSolution(status, iterations=iters)
    n = lp.n
    z = sf.z0 + sf.T @ xs[:sf.n_x]
    z = np.clip(z, lp.lower, lp.upper)
    obj = float(lp.c @ z)
    # y is for the flipped min-form rows; unflip, then map to multipliers.
    y = y * sf.flip
    lam = np.maximum(-y[:sf.n_ub], 0.0)
    eta = -y[sf.n_ub:sf.n_ub + sf.n_eq]
    cmin = -lp.c if lp.maximize else lp.c
    # Bound multipliers from the reduced costs in z-space.
    red = cmin + lp.A_ub.T @ lam + lp.A_eq.T @ eta
    sig_lo = np.zeros(n)
    sig_up = np.zeros(n)
    has_lo = np.isfinite(lp.lower)
    has_up = np.isfinite(lp.upper)
    pos = red > 0
    sig_lo[pos & has_lo] = red[pos & has_lo]
    sig_up[~pos & has_up] = -red[~pos & has_up]
    # sig_lo only where at the lower bound, sig_up only at the upper bound
    at_lo = has_lo & (z - lp.lower <= FEAS_TOL * (1 + np.abs(lp.lower)))
    at_up = has_up & (lp.upper - z <= FEAS_TOL * (1 + np.abs(lp.upper)))
    sig_lo[~at_lo] = 0.0
    sig_up[~at_up] = 0.0
    return LpSolution(Status.OPTIMAL, z, obj, lam, eta, sig_lo, sig_up, iters)


# ---------------------------------------------------------------------------
# branch and bound


@dataclass
class MixedProgram:
    lp: LinearProgram
    binary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.binary = np.asarray(self.binary, dtype=int).ravel()
        if self.binary.size and (self.binary.min() < 0 or self.binary.max() >= self.lp.n):
            raise ValueError("binary index out of range")


def solve_milp(mp: MixedProgram, node_limit: int = 10**6, incumbent=None) -> LpSolution:
    """Best-bound branch-and-bound over binary variables.

    ``incumbent`` may be a feasible point used to seed pruning.
    """
    base = mp.lp
    bins = mp.binary
    sign = -1.0 if base.maximize else 1.0   # work with min of sign*c
    lo0 = base.lower.copy()
    up0 = base.upper.copy()
    lo0[bins] = np.maximum(lo0[bins], 0.0)
    up0[bins] = np.minimum(up0[bins], 1.0)
    lo0[bins] = np.ceil(lo0[bins] - INT_TOL)
    up0[bins] = np.floor(up0[bins] + INT_TOL)
    if np.any(lo0 > up0):
        return LpSolution(Status.INFEASIBLE)

    def relax(lo, up):
        return solve_lp(LinearProgram(base.c, base.A_ub, base.b_ub, base.A_eq, base.b_eq,
                                      lo, up, base.maximize))

    best_val = np.inf
    best = None
    if incumbent is not None:
        z = np.asarray(incumbent, dtype=float)
        best_val = sign * float(base.c @ z)
    def improves(v):
        return not np.isfinite(best_val) or v < best_val - 1e-9 * (1 + abs(best_val))

    counter = itertools.count()
    heap = [(-np.inf, 0, next(counter), lo0, up0)]
    nodes = 0
    while heap:
        bound, negdepth, _, lo, up = heapq.heappop(heap)
        if not improves(bound):
            continue
        nodes += 1
        if nodes > node_limit:
            raise NodeLimitExceeded(f"more than {node_limit} nodes")
        sol = relax(lo, up)
        if sol.status is Status.UNBOUNDED:
            raise ValueError("LP relaxation is unbounded")
        if sol.status is not Status.OPTIMAL:
            continue
        val = sign * sol.objective
        if not improves(val):
            continue
        zb = sol.x[bins]
        frac = np.abs(zb - np.round(zb))
        if frac.max(initial=0.0) <= INT_TOL:
            # polish: integrality slack times a big-M coefficient can exceed
            # the model's own tolerances, so re-solve with binaries pinned
            fix_lo, fix_up = lo.copy(), up.copy()
            fix_lo[bins] = fix_up[bins] = np.round(zb)
            pol = relax(fix_lo, fix_up)
            if pol.optimal:
                pval = sign * pol.objective
                if improves(pval):
                    best_val, best = pval, pol
                continue
            if frac.max() == 0.0:
                continue
        k = bins[np.argmax(frac)]
        for v in (0.0, 1.0):
            lo2, up2 = lo.copy(), up.copy()
            lo2[k] = up2[k] = v
            heapq.heappush(heap, (val, negdepth - 1, next(counter), lo2, up2))
    if best is None:
        if incumbent is not None and np.isfinite(best_val):
            z = np.asarray(incumbent, dtype=float)
            fix_lo, fix_up = base.lower.copy(), base.upper.copy()
            fix_lo[bins] = fix_up[bins] = np.round(z[bins])
            best = relax(fix_lo, fix_up)
            if not best.optimal:
                return LpSolution(Status.INFEASIBLE, nodes=nodes)
        else:
            return LpSolution(Status.INFEASIBLE, nodes=nodes)
    x = best.x.copy()
    x[bins] = np.round(x[bins])
    best.x = x
    best.objective = float(base.c @ x)
    best.nodes = nodes
    return best
