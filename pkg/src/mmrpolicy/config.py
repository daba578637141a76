"""Run configuration read from a YAML document.

Every mapping is checked against its known keys so that a typo fails before
any computation starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .core import TreatmentGrid, UtilitySpec, ValidationError
from .firststage import EstimatorSpec
from .policy import PolicyClassSpec
from .regret import CRITERIA
from .shape import ShapeSpec


@dataclass
class UtilityConfig:
    alpha: float | None = None
    full_price: float | None = None
    benefit: list | None = None
    cost: list | None = None
    bound: float | None = None

    def build(self, grid: TreatmentGrid) -> UtilitySpec:
        bound = np.inf if self.bound is None else float(self.bound)
        if self.alpha is not None or self.full_price is not None:
            if self.alpha is None or self.full_price is None:
                raise ValidationError("utility needs both alpha and full_price")
            if self.benefit is not None or self.cost is not None:
                raise ValidationError("give either alpha/full_price or benefit/cost, not both")
            return UtilitySpec.subsidy(grid, float(self.alpha), float(self.full_price), bound)
        if self.benefit is None:
            raise ValidationError("utility needs alpha/full_price or benefit")
        b = np.asarray(self.benefit, dtype=float)
        c = np.zeros_like(b) if self.cost is None else np.asarray(self.cost, dtype=float)
        if b.shape[-1] != grid.J or c.shape[-1] != grid.J:
            raise ValidationError("benefit and cost need one entry per grid level")
        return UtilitySpec(b, c, bound)


@dataclass
class SolverConfig:
    repair: bool = True              # project first-stage estimates before bounding
    projection_tol: float = 1e-8
    projection_max_iter: int = 10_000


@dataclass
class SimulationConfig:
    dgp: object = "default"
    Ns: list = field(default_factory=lambda: [400, 1600, 6400])
    reps: int = 200


@dataclass
class RunConfig:
    grid: list | None = None
    observed: list | None = None
    shape: ShapeSpec = field(default_factory=ShapeSpec)
    utility: UtilityConfig | None = None
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    policy: PolicyClassSpec = field(default_factory=PolicyClassSpec)
    criterion: str = "minimax_regret"
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    output: str = "out"
    worstcase_levels: list | None = None
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def treatment_grid(self) -> TreatmentGrid:
        if self.grid is None or self.observed is None:
            raise ValidationError("config needs grid and observed")
        return TreatmentGrid.from_levels(self.grid, self.observed)

    def utility_spec(self, grid: TreatmentGrid) -> UtilitySpec:
        if self.utility is None:
            raise ValidationError("config needs a utility section")
        return self.utility.build(grid)


DGP_KEYS = {"cells", "probs", "m_true", "outcome", "sigma", "treat_probs"}


def _section(cls, raw, where):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ValidationError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(map(str, unknown))}")
    kw = dict(raw)
    for k in ("bounds", "cutoff_box", "features"):
        if k in kw and isinstance(kw[k], list):
            kw[k] = tuple(kw[k])
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def parse_config(raw) -> RunConfig:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping at the top level")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(f"unknown key(s) in config: {', '.join(map(str, unknown))}")
    cfg = RunConfig(
        grid=raw.get("grid"),
        observed=raw.get("observed"),
        shape=_section(ShapeSpec, raw.get("shape"), "shape"),
        utility=None if raw.get("utility") is None else _section(UtilityConfig, raw["utility"], "utility"),
        estimator=_section(EstimatorSpec, raw.get("estimator"), "estimator"),
        policy=_section(PolicyClassSpec, raw.get("policy"), "policy"),
        criterion=raw.get("criterion", "minimax_regret"),
        solver=_section(SolverConfig, raw.get("solver"), "solver"),
        seed=raw.get("seed", 0),
        output=raw.get("output", "out"),
        worstcase_levels=raw.get("worstcase_levels"),
        simulation=_section(SimulationConfig, raw.get("simulation"), "simulation"),
    )
    if cfg.criterion not in CRITERIA:
        raise ValidationError(f"criterion must be one of {CRITERIA}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ValidationError("seed must be a nonnegative integer")
    dgp = cfg.simulation.dgp
    if isinstance(dgp, dict):
        unknown = sorted(set(dgp) - DGP_KEYS)
        if unknown:
            raise ValidationError(f"unknown key(s) in simulation.dgp: {', '.join(unknown)}")
    elif dgp != "default":
        raise ValidationError("simulation.dgp must be 'default' or a mapping")
    if cfg.simulation.reps < 1:
        raise ValidationError("simulation.reps must be at least 1")
    if cfg.grid is not None:
        cfg.treatment_grid()      # validate early
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"config is not valid YAML: {exc}") from None
    return parse_config(raw)
