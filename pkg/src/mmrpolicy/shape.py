"""Linear shape restrictions S m <= r on response vectors over the treatment grid."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import TreatmentGrid, ValidationError

MONOTONE = (None, "decreasing", "increasing")
CURVATURE = (None, "convex", "concave")


class EmptySpecWarning(UserWarning):
    """No restriction was declared, so new treatments are unrestricted."""


@dataclass(frozen=True)
class ShapeSpec:
    monotone: str | None = None
    curvature: str | None = None
    bounds: tuple[float, float] | None = None
    lipschitz: float | None = None

    def __post_init__(self):
        if self.monotone not in MONOTONE:
            raise ValidationError(f"monotone must be one of {MONOTONE}")
        if self.curvature not in CURVATURE:
            raise ValidationError(f"curvature must be one of {CURVATURE}")
        if self.bounds is not None:
            lo, hi = self.bounds
            if lo > hi:
                raise ValidationError("lower bound exceeds upper bound")
            object.__setattr__(self, "bounds", (float(lo), float(hi)))
        if self.lipschitz is not None and self.lipschitz < 0:
            raise ValidationError("Lipschitz constant must be nonnegative")


@dataclass(frozen=True)
class ConstraintSystem:
    S: np.ndarray
    r: np.ndarray
    F: np.ndarray

    @property
    def J(self) -> int:
        return self.F.shape[1]

    @property
    def bounded(self) -> bool:
        """True when every coordinate has both a lower and an upper bound row."""
        S = self.S
        up = np.any((S > 0) & (np.count_nonzero(S, axis=1)[:, None] == 1), axis=0)
        lo = np.any((S < 0) & (np.count_nonzero(S, axis=1)[:, None] == 1), axis=0)
        return bool(np.all(up) and np.all(lo))

    def with_rows(self, S_extra, r_extra) -> "ConstraintSystem":
        S_extra = np.atleast_2d(np.asarray(S_extra, dtype=float))
        return ConstraintSystem(np.vstack([self.S, S_extra]),
                                np.r_[self.r, np.atleast_1d(r_extra)], self.F)


def first_differences(values) -> np.ndarray:
    """Rows (-1/h_j, 1/h_j) on (m_j, m_{j+1}); S1 m <= 0 means decreasing."""
    d = np.asarray(values, dtype=float)
    J = d.size
    inv = 1.0 / np.diff(d)
    S1 = np.zeros((J - 1, J))
    idx = np.arange(J - 1)
    S1[idx, idx] = -inv
    S1[idx, idx + 1] = inv
    return S1


def second_differences(values) -> np.ndarray:
    """Rows (-1/h_j, 1/h_j + 1/h_{j+1}, -1/h_{j+1}); S2 m <= 0 means convex."""
    d = np.asarray(values, dtype=float)
    J = d.size
    if J < 3:
        return np.zeros((0, J))
    inv = 1.0 / np.diff(d)
    S2 = np.zeros((J - 2, J))
    idx = np.arange(J - 2)
    S2[idx, idx] = -inv[:-1]
    S2[idx, idx + 1] = inv[:-1] + inv[1:]
    S2[idx, idx + 2] = -inv[1:]
    return S2


def build_constraints(grid: TreatmentGrid, spec: ShapeSpec) -> ConstraintSystem:
    """Stack bound, monotonicity, curvature and Lipschitz rows, in that order."""
    J = grid.J
    blocks, rhs = [], []
    if spec.bounds is not None:
        lo, hi = spec.bounds
        blocks += [-np.eye(J), np.eye(J)]
        rhs += [np.full(J, -lo), np.full(J, hi)]
    if spec.monotone is not None:
        S1 = first_differences(grid.values)
        blocks.append(S1 if spec.monotone == "decreasing" else -S1)
        rhs.append(np.zeros(J - 1))
    if spec.curvature is not None:
        S2 = second_differences(grid.values)
        blocks.append(S2 if spec.curvature == "convex" else -S2)
        rhs.append(np.zeros(S2.shape[0]))
    if spec.lipschitz is not None:
        S1 = first_differences(grid.values)
        blocks += [S1, -S1]
        rhs += [np.full(J - 1, spec.lipschitz)] * 2
    if not blocks:
        warnings.warn("no shape restrictions or bounds declared; responses to new "
                      "treatments are unrestricted", EmptySpecWarning, stacklevel=2)
        return ConstraintSystem(np.zeros((0, J)), np.zeros(0), grid.selection_matrix())
    return ConstraintSystem(np.vstack(blocks), np.concatenate(rhs), grid.selection_matrix())


def is_feasible(cs: ConstraintSystem, m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if m.size != cs.J:
        raise ValidationError(f"response vector must have length {cs.J}")
    if cs.S.shape[0] == 0:
        return True
    return bool(np.max(cs.S @ m - cs.r) <= tol)
