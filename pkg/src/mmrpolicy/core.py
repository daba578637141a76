"""Domain types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Inputs violate a documented invariant."""


class InfeasibleIdentifiedSet(RuntimeError):
    """No response vector satisfies the shape restrictions and the first-stage means."""


@dataclass(frozen=True)
class TreatmentGrid:
    values: np.ndarray
    observed_mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        mask = np.asarray(self.observed_mask, dtype=bool).ravel()
        if values.size < 2:
            raise ValidationError("treatment grid needs at least two levels")
        if mask.size != values.size:
            raise ValidationError("observed mask length differs from grid length")
        if np.any(np.diff(values) <= 0):
            raise ValidationError("treatment levels must be strictly increasing")
        if not mask.any():
            raise ValidationError("at least one treatment level must be observed")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed_mask", mask)

    @classmethod
    def from_levels(cls, values, observed) -> "TreatmentGrid":
        values = np.asarray(values, dtype=float)
        mask = np.zeros(values.size, dtype=bool)
        for d in np.atleast_1d(observed):
            hit = np.where(np.isclose(values, d, rtol=0, atol=1e-12))[0]
            if hit.size == 0:
                raise ValidationError(f"observed level {d} is not on the treatment grid")
            mask[hit[0]] = True
        return cls(values, mask)

    @property
    def J(self) -> int:
        return self.values.size

    @property
    def J0(self) -> int:
        return int(self.observed_mask.sum())

    @property
    def observed_index(self) -> np.ndarray:
        return np.flatnonzero(self.observed_mask)

    @property
    def observed_values(self) -> np.ndarray:
        return self.values[self.observed_mask]

    def selection_matrix(self) -> np.ndarray:
        F = np.zeros((self.J0, self.J))
        F[np.arange(self.J0), self.observed_index] = 1.0
        return F

    def index_of(self, d) -> int:
        hit = np.where(np.isclose(self.values, d, rtol=0, atol=1e-9))[0]
        if hit.size == 0:
            raise ValidationError(f"{d} is not a treatment level")
        return int(hit[0])


@dataclass(frozen=True)
class UtilitySpec:
    """Utility linear in the outcome: u(d, x, y) = b(d, x) y - c(d, x).

    ``benefit`` and ``cost`` are either length-J vectors shared by all cells or
    (n_cells, J) arrays.
    """

    benefit: np.ndarray
    cost: np.ndarray
    bound: float = np.inf

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.benefit, dtype=float))
        c = np.atleast_1d(np.asarray(self.cost, dtype=float))
        if c.shape != b.shape:
            c = np.broadcast_to(c, b.shape).copy()
        if np.max(np.abs(b)) > self.bound or np.max(np.abs(c)) > self.bound:
            raise ValidationError(f"utility coefficients exceed the bound {self.bound}")
        object.__setattr__(self, "benefit", b)
        object.__setattr__(self, "cost", c)

    @classmethod
    def subsidy(cls, grid: TreatmentGrid, alpha: float, p_full: float, bound=np.inf):
        """Valuation ``alpha`` per take-up, paying the subsidy ``p_full - d``."""
        return cls(alpha - (p_full - grid.values), np.zeros(grid.J), bound)

    def b(self, cell: int = 0) -> np.ndarray:
        return self.benefit if self.benefit.ndim == 1 else self.benefit[cell]

    def c(self, cell: int = 0) -> np.ndarray:
        return self.cost if self.cost.ndim == 1 else self.cost[cell]

    def value(self, m, cell: int = 0) -> np.ndarray:
        return self.b(cell) * np.asarray(m) - self.c(cell)


@dataclass(frozen=True)
class CovariateTable:
    """Sample of (treatment index, outcome, covariates) with deduplicated cells."""

    treatment: np.ndarray      # grid index of each row's treatment
    outcome: np.ndarray
    X: np.ndarray              # (N, k)
    cells: np.ndarray          # (n_cells, k), lexicographically sorted
    cell_of_row: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_arrays(cls, grid: TreatmentGrid, treatment, outcome, X=None):
        treatment = np.asarray(treatment, dtype=float).ravel()
        outcome = np.asarray(outcome, dtype=float).ravel()
        N = treatment.size
        if outcome.size != N:
            raise ValidationError("treatment and outcome lengths differ")
        if N == 0:
            raise ValidationError("empty sample")
        X = np.zeros((N, 0)) if X is None else np.asarray(X, dtype=float).reshape(N, -1)
        obs = grid.observed_values
        dist = np.abs(treatment[:, None] - obs[None, :])
        k = dist.argmin(axis=1)
        bad = dist[np.arange(N), k] > 1e-9
        if bad.any():
            raise ValidationError(
                f"treatment {treatment[bad][0]} is not an observed level {obs.tolist()}")
        tidx = grid.observed_index[k]
        if X.shape[1] == 0:
            cells = np.zeros((1, 0))
            inv = np.zeros(N, dtype=int)
            counts = np.array([N])
        else:
            cells, inv, counts = np.unique(X, axis=0, return_inverse=True, return_counts=True)
            inv = inv.ravel()
        return cls(tidx, outcome, X, cells, inv, counts)

    @property
    def N(self) -> int:
        return self.outcome.size

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum()


@dataclass(frozen=True)
class ResponseEstimate:
    """First-stage means: values[cell, k] estimates m(d_k, x_cell) for observed d_k."""

    values: np.ndarray
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    def within_bounds(self, tol=1e-12) -> bool:
        return bool(np.all(self.values >= self.lower - tol) and np.all(self.values <= self.upper + tol))


@dataclass
class RegretMatrix:
    """gamma[cell, j]; optional gamma_jk[cell, j, k] and worst-case responses m_star[cell, j]."""

    gamma: np.ndarray
    criterion: str = "minimax_regret"
    binding_k: np.ndarray | None = None
    m_star: np.ndarray | None = None
    gamma_jk: np.ndarray | None = None

    @property
    def n_cells(self) -> int:
        return self.gamma.shape[0]

    @property
    def J(self) -> int:
        return self.gamma.shape[1]


@dataclass(frozen=True)
class Constant:
    level: int


@dataclass(frozen=True)
class LinearScore:
    """Assign level j when cutoffs[j-1] < x[features] @ beta <= cutoffs[j]."""

    beta: np.ndarray
    cutoffs: np.ndarray
    features: tuple = field(default=())

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        cut = np.asarray(self.cutoffs, dtype=float).ravel()
        if np.any(np.diff(cut) < 0):
            raise ValidationError("cutoffs must be weakly increasing")
        feats = tuple(int(f) for f in self.features) or tuple(range(beta.size))
        if len(feats) != beta.size:
            raise ValidationError("one weight per score feature required")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "cutoffs", cut)
        object.__setattr__(self, "features", feats)

    def score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X[:, list(self.features)] @ self.beta


Policy = Constant | LinearScore


def assign_many(policy: Policy, X, grid: TreatmentGrid) -> np.ndarray:
    """Vectorised :func:`assign` over the rows of X."""
    if isinstance(policy, Constant):
        n = np.atleast_2d(X).shape[0] if X is not None else 1
        return np.full(n, policy.level, dtype=int)
    if policy.cutoffs.size != grid.J - 1:
        raise ValidationError(f"expected {grid.J - 1} cutoffs, got {policy.cutoffs.size}")
    s = policy.score(X)
    return (policy.cutoffs[None, :] < s[:, None]).sum(axis=1)


def assign(policy: Policy, x, grid: TreatmentGrid) -> int:
    """Treatment index for a single covariate vector."""
    return int(assign_many(policy, np.atleast_2d(np.asarray(x, dtype=float)), grid)[0])
