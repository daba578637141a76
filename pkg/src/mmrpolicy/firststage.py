"""First-stage response estimates on observed treatments and their shape repair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CovariateTable, ResponseEstimate, TreatmentGrid, ValidationError
from .linprog import LinearProgram, Status, solve_lp
from .shape import ConstraintSystem

ESTIMATORS = ("cell_means", "logistic_poly2")


class InsufficientData(ValueError):
    pass


class NonBinaryOutcome(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


class InfeasibleShapeSet(RuntimeError):
    """The shape restrictions admit no response vector at all."""


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str = "cell_means"
    ridge: float = 1e-8
    max_iter: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValidationError(f"estimator kind must be one of {ESTIMATORS}")
        if self.ridge < 0:
            raise ValidationError("ridge penalty must be nonnegative")


def poly2_features(X) -> np.ndarray:
    """Columns 1, x_a, x_a^2, then x_a x_b for a < b."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, k = X.shape
    cols = [np.ones(n)]
    cols += [X[:, a] for a in range(k)]
    cols += [X[:, a] ** 2 for a in range(k)]
    cols += [X[:, a] * X[:, b] for a in range(k) for b in range(a + 1, k)]
    return np.column_stack(cols)


@dataclass
class LogisticFit:
    """Ridge logistic regression on standardised degree-2 features."""

    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    ridge: float
    iterations: int

    def design(self, X) -> np.ndarray:
        Z = poly2_features(X)
        Z[:, 1:] = (Z[:, 1:] - self.center) / self.scale
        return Z

    def predict(self, X) -> np.ndarray:
        return _sigmoid(self.design(X) @ self.coef)

    def gradient(self, X, y) -> np.ndarray:
        """Score of the penalised log-likelihood (zero at the optimum)."""
        Z = self.design(X)
        pen = self.ridge * self.coef
        pen[0] = 0.0
        return Z.T @ (np.asarray(y, dtype=float) - _sigmoid(Z @ self.coef)) - pen


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _penalized_loglik(Z, y, beta, ridge):
    t = Z @ beta
    ll = y @ t - np.logaddexp(0.0, t).sum()
    return ll - 0.5 * ridge * (beta[1:] @ beta[1:])


def fit_logistic(X, y, ridge=1e-8, max_iter=200, tol=1e-10) -> LogisticFit:
    """Damped Newton (IRLS) on the ridge-penalised log-likelihood.

    The intercept is unpenalised.  Stops once the Newton step is below ``tol``.
    """
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise NonBinaryOutcome("logistic first stage requires outcomes in {0, 1}")
    Z = poly2_features(X)
    center = Z[:, 1:].mean(axis=0)
    scale = Z[:, 1:].std(axis=0)
    scale[scale == 0] = 1.0
    Z[:, 1:] = (Z[:, 1:] - center) / scale
    p = Z.shape[1]
    P = ridge * np.eye(p)
    P[0, 0] = 0.0
    beta = np.zeros(p)
    ybar = y.mean()
    if 0 < ybar < 1:
        beta[0] = np.log(ybar / (1 - ybar))
    ll = _penalized_loglik(Z, y, beta, ridge)
    for it in range(1, max_iter + 1):
        mu = _sigmoid(Z @ beta)
        grad = Z.T @ (y - mu) - P @ beta
        H = (Z * (mu * (1 - mu))[:, None]).T @ Z + P
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _penalized_loglik(Z, y, cand, ridge)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, ll = cand, ll_new
        if np.max(np.abs(t * step)) <= tol:
            return LogisticFit(beta, center, scale, ridge, it)
    raise NoConvergence(f"logistic fit did not converge in {max_iter} iterations")


def estimate(data: CovariateTable, grid: TreatmentGrid, spec: EstimatorSpec) -> ResponseEstimate:
    """First-stage means m0(d, x) for every cell and every observed level."""
    n, J0 = data.n_cells, grid.J0
    out = np.empty((n, J0))
    for k, j in enumerate(grid.observed_index):
        rows = data.treatment == j
        if not rows.any():
            raise InsufficientData(f"no observations at treatment {grid.values[j]}")
        if spec.kind == "cell_means":
            sums = np.bincount(data.cell_of_row[rows], data.outcome[rows], minlength=n)
            cnt = np.bincount(data.cell_of_row[rows], minlength=n)
            if np.any(cnt == 0):
                cell = int(np.flatnonzero(cnt == 0)[0])
                raise InsufficientData(
                    f"cell {cell} has no observations at treatment {grid.values[j]}")
            out[:, k] = sums / cnt
        else:
            fit = fit_logistic(data.X[rows], data.outcome[rows], spec.ridge,
                               spec.max_iter, spec.tol)
            out[:, k] = fit.predict(data.cells)
    return ResponseEstimate(out)


# ---------------------------------------------------------------------------
# projection onto the extendable set


def extension(cs: ConstraintSystem, w):
    """A full response vector m with S m <= r and F m = w, or None."""
    J = cs.J
    lp = LinearProgram(np.zeros(J), cs.S, cs.r, cs.F, w, lower=-np.inf, upper=np.inf)
    sol = solve_lp(lp)
    return sol.x if sol.optimal else None


def _lmo(cs, g):
    J = cs.J
    sol = solve_lp(LinearProgram(g, cs.S, cs.r, lower=-np.inf, upper=np.inf))
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleShapeSet("no response vector satisfies the shape restrictions")
    if sol.status is Status.UNBOUNDED:
        raise ValidationError("projection needs a bounded shape set; declare bounds")
    return sol.x


def project_cell(cs: ConstraintSystem, w, tol=1e-8, max_iter=10_000):
    """Closest extendable first-stage vector to ``w`` and a full-grid witness.

    Minimises ||F m - w||^2 over {S m <= r} by pairwise Frank-Wolfe with exact
    line search.  Stops when the Frank-Wolfe gap drops to ``tol``.
    """
    w = np.asarray(w, dtype=float)
    m = extension(cs, w)
    if m is not None:
        return w.copy(), m
    F = cs.F
    verts = [_lmo(cs, -F.T @ w)]
    alpha = [1.0]
    x = verts[0].copy()
    for _ in range(max_iter):
        resid = F @ x - w
        g = 2.0 * F.T @ resid
        s = _lmo(cs, g)
        gap = g @ (x - s)
        if gap <= tol:
            break
        scores = [g @ v for v in verts]
        a = int(np.argmax(scores))
        d = s - verts[a]
        Fd = F @ d
        denom = Fd @ Fd
        if denom <= 0:
            break
        step = min(max(-(resid @ Fd) / denom, 0.0), alpha[a])
        x = x + step * d
        for i, v in enumerate(verts):
            if np.allclose(v, s, rtol=0, atol=1e-12):
                alpha[i] += step
                break
        else:
            verts.append(s)
            alpha.append(step)
        alpha[a] -= step
        if alpha[a] <= 1e-15:
            del verts[a], alpha[a]
    return F @ x, x


def project_feasible(est: ResponseEstimate, cs: ConstraintSystem, tol=1e-8, max_iter=10_000):
    """Project every cell onto the set of first-stage vectors with a shape-feasible extension.

    Returns the repaired estimate and the (n_cells, J) array of witnesses.
    """
    vals = np.empty_like(est.values)
    wit = np.empty((est.n_cells, cs.J))
    for i in range(est.n_cells):
        vals[i], wit[i] = project_cell(cs, est.values[i], tol, max_iter)
    return ResponseEstimate(vals, est.lower, est.upper), wit
