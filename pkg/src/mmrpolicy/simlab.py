"""Monte Carlo checks of the estimated policy against the population optimum."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (CovariateTable, ResponseEstimate, TreatmentGrid, UtilitySpec,
                   ValidationError, assign_many)
from .firststage import EstimatorSpec, estimate, project_feasible
from .policy import PolicyClassSpec, PolicyResult, solve_policy
from .regret import regret_matrix
from .shape import ShapeSpec, build_constraints, is_feasible

OUTCOMES = ("bernoulli", "gaussian")


@dataclass(frozen=True)
class SyntheticDGP:
    grid: TreatmentGrid
    shape: ShapeSpec
    cells: np.ndarray            # (n_cells, k) covariate values
    probs: np.ndarray            # P(X = cell)
    m_true: np.ndarray           # (n_cells, J) true mean response on the full grid
    utility: UtilitySpec
    outcome: str = "bernoulli"
    sigma: float = 0.1
    treat_probs: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        cells = np.atleast_2d(np.asarray(self.cells, dtype=float))
        probs = np.asarray(self.probs, dtype=float)
        m = np.atleast_2d(np.asarray(self.m_true, dtype=float))
        if abs(probs.sum() - 1) > 1e-12 or np.any(probs < 0):
            raise ValidationError("cell probabilities must be a distribution")
        if m.shape != (cells.shape[0], self.grid.J):
            raise ValidationError("m_true must be (n_cells, J)")
        if self.outcome not in OUTCOMES:
            raise ValidationError(f"outcome must be one of {OUTCOMES}")
        cs = build_constraints(self.grid, self.shape)
        for i, row in enumerate(m):
            if not is_feasible(cs, row, 1e-12):
                raise ValidationError(f"true response of cell {i} violates the shape restrictions")
        tp = (np.full(self.grid.J0, 1.0 / self.grid.J0) if self.treat_probs is None
              else np.asarray(self.treat_probs, dtype=float))
        if tp.size != self.grid.J0 or abs(tp.sum() - 1) > 1e-12:
            raise ValidationError("treatment probabilities must cover the observed levels")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "m_true", m)
        object.__setattr__(self, "treat_probs", tp)

    @property
    def constraints(self):
        return build_constraints(self.grid, self.shape)

    @property
    def observed_means(self) -> ResponseEstimate:
        return ResponseEstimate(self.m_true[:, self.grid.observed_mask])

    def utility_for(self, cells) -> UtilitySpec:
        """Utility restricted (and reordered) to the given covariate cells."""
        if self.utility.benefit.ndim == 1:
            return self.utility
        idx = self.cell_index(cells)
        return UtilitySpec(self.utility.benefit[idx], self.utility.cost[idx], self.utility.bound)

    def cell_index(self, cells) -> np.ndarray:
        cells = np.atleast_2d(cells)
        d = np.abs(cells[:, None, :] - self.cells[None, :, :]).max(axis=2)
        return d.argmin(axis=1)

    def sample(self, N: int, rng: np.random.Generator) -> CovariateTable:
        cell = rng.choice(self.cells.shape[0], size=N, p=self.probs)
        k = rng.choice(self.grid.J0, size=N, p=self.treat_probs)
        level = self.grid.observed_index[k]
        mean = self.m_true[cell, level]
        if self.outcome == "bernoulli":
            y = (rng.random(N) < mean).astype(float)
        else:
            y = mean + self.sigma * rng.standard_normal(N)
        return CovariateTable.from_arrays(self.grid, self.grid.values[level], y, self.cells[cell])


def default_dgp(seed: int = 20240601) -> SyntheticDGP:
    """Four covariate cells, five price-like levels, two of them observed.

    Benefit of treating is the level itself, so lower levels are cheap but
    generate little utility.  The true curves are decreasing and convex.
    Endpoints were picked so that neighbouring monotone assignments have
    worst-case regrets a few sampling standard errors apart over
    N = 400..6400, which puts the mean regret gap on an N^(-1/2) path.
    """
    grid = TreatmentGrid.from_levels([0.0, 0.5, 1.0, 1.5, 2.0], [0.0, 2.0])
    # endpoints observed; interior filled by a convex quadratic between them
    top = np.array([0.86, 0.86, 0.75, 0.67])
    bottom = np.array([0.09, 0.17, 0.21, 0.34])
    shape = (1.0 - grid.values / 2.0) ** 2
    m = bottom[:, None] + (top - bottom)[:, None] * shape[None, :]
    return SyntheticDGP(
        grid=grid,
        shape=ShapeSpec("decreasing", "convex", (0.0, 1.0)),
        cells=np.array([[0.0], [1.0], [2.0], [3.0]]),
        probs=np.full(4, 0.25),
        m_true=m,
        utility=UtilitySpec(grid.values, np.zeros(grid.J)),
        seed=seed,
    )


def population_gamma(dgp: SyntheticDGP, criterion="minimax_regret", cs=None, u=None):
    """Exact population regret contributions from the primal comparison LPs."""
    cs = dgp.constraints if cs is None else cs
    u = dgp.utility if u is None else u
    return regret_matrix(cs, dgp.observed_means, u, criterion=criterion, method="primal")


def population_regret(dgp: SyntheticDGP, policy, cs=None, u=None, gamma=None) -> float:
    """Worst-case expected regret of ``policy`` under the true distribution.

    ``gamma`` may carry a precomputed :func:`population_gamma` result.
    """
    rm = population_gamma(dgp, cs=cs, u=u) if gamma is None else gamma
    levels = assign_many(policy, dgp.cells, dgp.grid)
    return float(dgp.probs @ rm.gamma[np.arange(len(levels)), levels])


def population_optimum(dgp: SyntheticDGP, class_spec: PolicyClassSpec, gamma=None) -> PolicyResult:
    rm = population_gamma(dgp) if gamma is None else gamma
    return solve_policy(rm, dgp.cells, dgp.probs, class_spec)


def run_pipeline(data: CovariateTable, grid, cs, u, est_spec: EstimatorSpec,
                 class_spec: PolicyClassSpec, criterion="minimax_regret") -> PolicyResult:
    """estimate -> project -> worst-case regret -> policy search."""
    est = estimate(data, grid, est_spec)
    est, _ = project_feasible(est, cs)
    rm = regret_matrix(cs, est, u, criterion)
    return solve_policy(rm, data.cells, data.weights, class_spec)


@dataclass(frozen=True)
class GapRecord:
    N: int
    rep: int
    seed: int
    regret: float
    optimum: float
    gap: float


def replication_seed(base: int, N: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([base, N, rep])


def convergence_experiment(dgp: SyntheticDGP, Ns, reps: int,
                           est_spec: EstimatorSpec | None = None,
                           class_spec: PolicyClassSpec | None = None,
                           threads: int = 1) -> list[GapRecord]:
    """Regret gap of the estimated policy for each sample size and replication.

    Each replication draws from its own seed derived from (dgp.seed, N, rep),
    so the table does not depend on ``threads``.
    """
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    est_spec = est_spec or EstimatorSpec()
    class_spec = class_spec or PolicyClassSpec("linear_score", (0,))
    gamma = population_gamma(dgp)
    # evaluate the optimum along the same path as the estimates so ties give exact zeros
    best = population_regret(dgp, population_optimum(dgp, class_spec, gamma).policy, gamma=gamma)
    cs = dgp.constraints

    def one(task):
        N, rep = task
        rng = np.random.default_rng(replication_seed(dgp.seed, N, rep))
        data = dgp.sample(N, rng)
        res = run_pipeline(data, dgp.grid, cs, dgp.utility_for(data.cells), est_spec, class_spec)
        val = population_regret(dgp, res.policy, gamma=gamma)
        return GapRecord(int(N), rep, dgp.seed, val, best, val - best)

    tasks = [(N, rep) for N in Ns for rep in range(reps)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]


def noiseless_gap(dgp: SyntheticDGP, class_spec: PolicyClassSpec):
    """Feed the true observed means through the estimation pipeline.

    Returns (estimated policy result, its population regret, population optimum).
    """
    cs = dgp.constraints
    est, _ = project_feasible(dgp.observed_means, cs)
    rm = regret_matrix(cs, est, dgp.utility)
    res = solve_policy(rm, dgp.cells, dgp.probs, class_spec)
    gamma = population_gamma(dgp)
    return res, population_regret(dgp, res.policy, gamma=gamma), population_optimum(dgp, class_spec, gamma)


def rate_slope(records) -> tuple[np.ndarray, np.ndarray, float]:
    """Mean gap per N and the OLS slope of log mean gap on log N."""
    Ns = np.array(sorted({r.N for r in records}))
    means = np.array([np.mean([r.gap for r in records if r.N == N]) for N in Ns])
    with np.errstate(divide="ignore"):
        slope = np.polyfit(np.log(Ns), np.log(means), 1)[0] if np.all(means > 0) else np.nan
    return Ns, means, float(slope)
