"""Minimise the empirical worst-case regret over a policy class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Constant, LinearScore, RegretMatrix, ValidationError, assign_many
from .linprog import LinearProgram, MixedProgram, Status, solve_milp

POLICY_KINDS = ("constant", "linear_score")


class MilpInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicyClassSpec:
    """Linear eligibility scores share one weight vector and use ordered cutoffs.

    The first score weight is fixed to 1 when ``normalize`` is set; otherwise it
    is boxed to [0, 1] under ``sign_constraint`` and to [-1, 1] without it.
    Remaining weights lie in [-1, 1].  Covariates are rescaled to [0, 1].
    """

    kind: str = "constant"
    features: tuple = (0,)
    sign_constraint: bool = True
    normalize: bool = True
    cutoff_box: tuple[float, float] | None = None
    epsilon: float = 1e-6
    node_limit: int = 10**6

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(f"policy kind must be one of {POLICY_KINDS}")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.cutoff_box is not None and not self.cutoff_box[0] < self.cutoff_box[1]:
            raise ValidationError("cutoff box must satisfy lo < hi")
        object.__setattr__(self, "features", tuple(int(f) for f in self.features))

    def box(self) -> tuple[float, float]:
        if self.cutoff_box is not None:
            return tuple(float(v) for v in self.cutoff_box)
        K = len(self.features)
        return (-float(K), float(K) + 1.0)


@dataclass
class PolicyResult:
    policy: Constant | LinearScore
    objective: float
    levels: np.ndarray          # assigned level per cell
    nodes: int = 0


def policy_objective(rm: RegretMatrix, weights, levels) -> float:
    levels = np.asarray(levels, dtype=int)
    return float(np.asarray(weights) @ rm.gamma[np.arange(rm.n_cells), levels])


def solve_constant(rm: RegretMatrix, weights) -> PolicyResult:
    """Single level for everyone; ties go to the lowest level."""
    totals = np.asarray(weights, dtype=float) @ rm.gamma
    best = totals.min()
    j = int(np.flatnonzero(totals <= best + 1e-12 * (1 + abs(best)))[0])
    return PolicyResult(Constant(j), float(totals[j]), np.full(rm.n_cells, j))


@dataclass(frozen=True)
class Rescale:
    """Affine map of the score features onto [0, 1]."""

    lo: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, Z):
        lo = Z.min(axis=0)
        span = Z.max(axis=0) - lo
        span[span == 0] = 1.0
        return cls(lo, span)

    def __call__(self, Z):
        return (Z - self.lo) / self.span

    def to_raw(self, beta, cutoffs):
        """Weights and cutoffs giving the same scores on unscaled features."""
        raw_beta = beta / self.span
        shift = float(beta @ (self.lo / self.span))
        return raw_beta, cutoffs + shift


def _spread_cutoffs(scores, levels, J):
    """Cutoffs midway between neighbouring level groups (largest margins)."""
    lo, hi = scores.min() - 1.0, scores.max() + 1.0
    cut = np.empty(J - 1)
    for j in range(J - 1):
        below = scores[levels <= j]
        above = scores[levels > j]
        if below.size == 0:
            cut[j] = lo
        elif above.size == 0:
            cut[j] = hi
        else:
            cut[j] = 0.5 * (below.max() + above.min())
    return cut


def solve_linear_score(rm: RegretMatrix, cells, weights, spec: PolicyClassSpec) -> PolicyResult:
    """Best linear eligibility-score policy by branch-and-bound.

    Binary g[i, j] indicates that cell i scores above cutoff j, so cell i
    receives level sum_j g[i, j] and its indicator for level j is
    g[i, j-1] - g[i, j] with g[i, 0] = 1 and g[i, J] = 0.
    """
    cells = np.atleast_2d(np.asarray(cells, dtype=float))
    weights = np.asarray(weights, dtype=float)
    n, J = rm.gamma.shape
    feats = list(spec.features)
    K = len(feats)
    if K == 0:
        raise ValidationError("linear score needs at least one feature")
    Z_raw = cells[:, feats]
    scale = Rescale.fit(Z_raw)
    Z = scale(Z_raw)
    c_lo, c_hi = spec.box()
    eps = spec.epsilon

    # beta bounds; beta_1 fixed at 1 under normalisation
    b_lo = np.full(K, -1.0)
    b_hi = np.full(K, 1.0)
    if spec.normalize:
        b_lo[0] = b_hi[0] = 1.0
    elif spec.sign_constraint:
        b_lo[0] = 0.0
    s_lo = (np.minimum(b_lo * Z, b_hi * Z)).sum(axis=1).min()
    s_hi = (np.maximum(b_lo * Z, b_hi * Z)).sum(axis=1).max()
    M = max(s_hi - c_lo, c_hi - s_lo) + 1.0

    nb, nc, ng = K, J - 1, n * (J - 1)
    nvar = nb + nc + ng
    gi = lambda i, j: nb + nc + i * (J - 1) + j      # noqa: E731  (j = 0..J-2)
    rows, rhs = [], []

    def row():
        r = np.zeros(nvar)
        rows.append(r)
        return r

    for i in range(n):
        for j in range(J - 1):
            # g = 0  =>  score <= c_j
            r = row()
            r[:nb] = Z[i]
            r[nb + j] = -1.0
            r[gi(i, j)] = -M
            rhs.append(0.0)
            # g = 1  =>  score >= c_j + eps
            r = row()
            r[:nb] = -Z[i]
            r[nb + j] = 1.0
            r[gi(i, j)] = M + eps
            rhs.append(M)
            if j + 1 < J - 1:
                r = row()
                r[gi(i, j + 1)] = 1.0
                r[gi(i, j)] = -1.0
                rhs.append(0.0)
    for j in range(J - 2):
        r = row()
        r[nb + j] = 1.0
        r[nb + j + 1] = -1.0
        rhs.append(0.0)

    cost = np.zeros(nvar)
    base = float(weights @ rm.gamma[:, 0])
    for i in range(n):
        for j in range(J - 1):
            cost[gi(i, j)] = weights[i] * (rm.gamma[i, j + 1] - rm.gamma[i, j])
    lower = np.r_[b_lo, np.full(nc, c_lo), np.zeros(ng)]
    upper = np.r_[b_hi, np.full(nc, c_hi), np.ones(ng)]
    A = np.array(rows).reshape(-1, nvar)
    lp = LinearProgram(cost, A, np.array(rhs), lower=lower, upper=upper)
    mp = MixedProgram(lp, np.arange(nb + nc, nvar))

    # seed with the best constant policy: all weight on the first feature
    const = solve_constant(rm, weights)
    inc = np.zeros(nvar)
    inc[:nb] = np.clip(0.0, b_lo, b_hi)
    jstar = const.policy.level
    inc[nb:nb + nc] = np.where(np.arange(nc) < jstar, c_lo, c_hi)
    for i in range(n):
        inc[gi(i, 0):gi(i, 0) + jstar] = 1.0
    if not np.all(A @ inc <= np.array(rhs) + 1e-9):
        inc = None

    sol = solve_milp(mp, node_limit=spec.node_limit, incumbent=inc)
    if sol.status is not Status.OPTIMAL:
        raise MilpInfeasible("no linear-score policy satisfies the cutoff box")
    beta = sol.x[:nb]
    g = sol.x[nb + nc:].reshape(n, J - 1)
    levels = np.rint(g.sum(axis=1)).astype(int)
    scores = Z @ beta
    cut = _spread_cutoffs(scores, levels, J)
    raw_beta, raw_cut = scale.to_raw(beta, cut)
    pol = LinearScore(raw_beta, np.maximum.accumulate(raw_cut), tuple(feats))
    got = (pol.cutoffs[None, :] < pol.score(cells)[:, None]).sum(axis=1)
    if not np.array_equal(got, levels):
        raise RuntimeError("recovered cutoffs do not reproduce the MILP assignment")
    obj = base + float(cost[nb + nc:] @ sol.x[nb + nc:])
    return PolicyResult(pol, obj, levels, sol.nodes)


def solve_policy(rm: RegretMatrix, cells, weights, spec: PolicyClassSpec) -> PolicyResult:
    if spec.kind == "constant":
        return solve_constant(rm, weights)
    return solve_linear_score(rm, cells, weights, spec)


def assigned_levels(result: PolicyResult, cells, grid) -> np.ndarray:
    return assign_many(result.policy, cells, grid)
