"""Worst-case regret over the estimated identified set.

For one covariate cell the identified set is the polytope
``{m : S m <= r, F m = w}`` with ``w`` the first-stage means on observed
levels.  The regret of assigning level j instead of k is the linear
functional ``v_m(d_k) - v_m(d_j)``; its maximum over the polytope is one LP.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import InfeasibleIdentifiedSet, RegretMatrix, ResponseEstimate, UtilitySpec
from .linprog import LinearProgram, Status, solve_lp
from .shape import ConstraintSystem

CRITERIA = ("minimax_regret", "maximin_welfare")


class UnboundedRegret(RuntimeError):
    """The identified set is unbounded in a direction that moves regret."""


@dataclass
class DualCertificate:
    value: float
    k: int
    lam: np.ndarray
    eta: np.ndarray
    m_star: np.ndarray


@dataclass
class Envelope:
    m_min: np.ndarray
    m_max: np.ndarray
    v_min: np.ndarray
    v_max: np.ndarray


def regret_direction(b, c, j, k):
    """Objective vector and constant with v_m(d_k) - v_m(d_j) = coef @ m - const.

    ``k=None`` gives the maximin-welfare comparison against zero utility.
    """
    J = len(b)
    coef = np.zeros(J)
    const = 0.0
    if k is not None:
        coef[k] += b[k]
        const += c[k]
    coef[j] -= b[j]
    const -= c[j]
    return coef, const


def _max_linear(cs: ConstraintSystem, w, coef):
    J = cs.J
    lp = LinearProgram(coef, cs.S, cs.r, cs.F, w, lower=-np.inf, upper=np.inf, maximize=True)
    sol = solve_lp(lp)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleIdentifiedSet("identified set is empty at this cell")
    if sol.status is Status.UNBOUNDED:
        raise UnboundedRegret("identified set is unbounded; add bound restrictions")
    return sol


def gamma_jk(cs: ConstraintSystem, w, b, c, j: int, k: int | None):
    """Largest regret of assigning j rather than k; returns (value, maximising m)."""
    coef, const = regret_direction(b, c, j, k)
    sol = _max_linear(cs, np.asarray(w, dtype=float), coef)
    return sol.objective - const, sol.x


def gamma_j_primal(cs: ConstraintSystem, w, b, c, j: int):
    """max_k gamma_jk by J separate LPs; returns (value, k, m_star, per-k values)."""
    J = cs.J
    vals = np.empty(J)
    ms = []
    for k in range(J):
        vals[k], m = gamma_jk(cs, w, b, c, j, k)
        ms.append(m)
    k = int(np.argmax(vals))   # first maximiser, so ties go to the smallest k
    return vals[k], k, ms[k], vals


def _dual_program(cs: ConstraintSystem, w, b, c, j: int, ks):
    """min mu  s.t.  mu + c_jk >= r'lam_k + w'eta_k,  S'lam_k + F'eta_k = b_jk,  lam_k >= 0.

    The free eta_k are pinned by the observed-coordinate rows,
    eta_k = F (b_jk - S'lam_k), and are substituted out; only the rows for
    unobserved coordinates remain as equalities.
    """
    p, J = cs.S.shape
    obs = np.flatnonzero(cs.F.sum(axis=0))
    new = np.setdiff1d(np.arange(J), obs)
    St = cs.S.T
    w_full = cs.F.T @ w
    red_r = cs.r - cs.S @ w_full
    K = len(ks)
    nu = new.size
    n = K * p + 1
    A_eq = np.zeros((K * nu, n))
    b_eq = np.zeros(K * nu)
    A_ub = np.zeros((K, n))
    b_ub = np.zeros(K)
    for i, k in enumerate(ks):
        coef, const = regret_direction(b, c, j, k)
        s = i * p
        A_eq[i * nu:(i + 1) * nu, s:s + p] = St[new]
        b_eq[i * nu:(i + 1) * nu] = coef[new]
        A_ub[i, s:s + p] = red_r
        A_ub[i, -1] = -1.0
        b_ub[i] = const - w_full @ coef
    lower = np.zeros(n)
    lower[-1] = -np.inf
    cost = np.zeros(n)
    cost[-1] = 1.0
    return LinearProgram(cost, A_ub, b_ub, A_eq, b_eq, lower=lower, upper=np.inf)


def gamma_j(cs: ConstraintSystem, w, b, c, j: int, criterion: str = "minimax_regret"):
    """Worst-case regret of assigning j, from a single dual LP.

    The regret-maximising response is recovered from the primal LP of the
    smallest binding comparison level.
    """
    w = np.asarray(w, dtype=float)
    ks = list(range(cs.J)) if criterion == "minimax_regret" else [None]
    lp = _dual_program(cs, w, b, c, j, ks)
    sol = solve_lp(lp)
    if sol.status is Status.UNBOUNDED:
        raise InfeasibleIdentifiedSet("identified set is empty at this cell")
    if sol.status is Status.INFEASIBLE:
        # dual infeasible: either the primal is empty or some regret is unbounded
        _max_linear(cs, w, np.zeros(cs.J))
        raise UnboundedRegret("identified set is unbounded; add bound restrictions")
    mu = sol.objective
    p = cs.S.shape[0]
    lams = sol.x[:-1].reshape(len(ks), p)
    bound = lp.A_ub[:, :-1] @ sol.x[:-1] - lp.b_ub
    tol = 1e-8 * (1 + abs(mu))
    order = sorted(range(len(ks)), key=lambda i: (bound[i] < mu - tol, i))
    chosen = None
    for i in order:
        val, m = gamma_jk(cs, w, b, c, j, ks[i])
        if abs(val - mu) <= tol:
            chosen = (i, val, m)
            break
    if chosen is None:
        raise RuntimeError("dual value not attained by any comparison level")
    i, val, m = chosen
    coef, _ = regret_direction(b, c, j, ks[i])
    eta = cs.F @ (coef - cs.S.T @ lams[i])
    cert = DualCertificate(mu, -1 if ks[i] is None else ks[i], lams[i].copy(), eta, m)
    return mu, cert


def regret_matrix(cs: ConstraintSystem, est: ResponseEstimate, u: UtilitySpec,
                  criterion: str = "minimax_regret", method: str = "dual",
                  threads: int = 1) -> RegretMatrix:
    """Gamma for every cell and level.

    ``method="dual"`` solves one dual LP per (cell, j); ``"primal"`` solves the
    J^2 comparison LPs per cell and also fills ``gamma_jk``.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}")
    n, J = est.n_cells, cs.J

    def one_cell(i):
        w = est.values[i]
        b, c = u.b(i), u.c(i)
        g = np.empty(J)
        kk = np.empty(J, dtype=int)
        ms = np.empty((J, J))
        gjk = None
        if method == "primal":
            gjk = np.empty((J, J))
            for j in range(J):
                if criterion == "minimax_regret":
                    g[j], kk[j], ms[j], gjk[j] = gamma_j_primal(cs, w, b, c, j)
                else:
                    g[j], ms[j] = gamma_jk(cs, w, b, c, j, None)
                    kk[j] = -1
                    gjk[j] = g[j]
        else:
            for j in range(J):
                g[j], cert = gamma_j(cs, w, b, c, j, criterion)
                kk[j], ms[j] = cert.k, cert.m_star
        return g, kk, ms, gjk

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(one_cell, range(n)))
    else:
        out = [one_cell(i) for i in range(n)]
    gamma = np.array([o[0] for o in out]).reshape(n, J)
    if criterion == "minimax_regret":
        # regret against the first-best is nonnegative; clear solver dust
        gamma = np.where(np.abs(gamma) < 1e-12, 0.0, gamma)
    rm = RegretMatrix(gamma, criterion,
                      np.array([o[1] for o in out]).reshape(n, J),
                      np.array([o[2] for o in out]).reshape(n, J, J))
    if method == "primal":
        rm.gamma_jk = np.array([o[3] for o in out])
    return rm


def envelopes(cs: ConstraintSystem, w, b, c) -> Envelope:
    """Pointwise min and max of m(d) over the identified set, plus utility bounds."""
    J = cs.J
    w = np.asarray(w, dtype=float)
    lo = np.empty(J)
    hi = np.empty(J)
    for d in range(J):
        e = np.zeros(J)
        e[d] = 1.0
        hi[d] = _max_linear(cs, w, e).objective
        lo[d] = -_max_linear(cs, w, -e).objective
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    v_a, v_b = b * lo - c, b * hi - c
    return Envelope(lo, hi, np.minimum(v_a, v_b), np.maximum(v_a, v_b))
