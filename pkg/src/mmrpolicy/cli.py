"""Command-line front end: ``mmrpolicy {bounds,solve,simulate,project}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings

import numpy as np

from .config import RunConfig, load_config
from .core import (Constant, CovariateTable, InfeasibleIdentifiedSet, LinearScore,
                   TreatmentGrid, ValidationError, assign_many)
from .firststage import InfeasibleShapeSet, NoConvergence, estimate, project_feasible
from .linprog import NodeLimitExceeded, NumericalFailure
from .policy import MilpInfeasible, solve_policy
from .regret import UnboundedRegret, envelopes, regret_matrix
from .shape import EmptySpecWarning, build_constraints
from .simlab import SyntheticDGP, convergence_experiment, default_dgp

log = logging.getLogger("mmrpolicy")

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4


def fmt(x) -> str:
    """12 significant digits; integers stay integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    v = float(x)
    if v == 0.0:
        v = 0.0                  # drop the sign of negative zero
    return f"{v:.12g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_data(path, grid: TreatmentGrid) -> CovariateTable:
    """Parse ``treatment,outcome,x1,...,xk`` rows into a covariate table."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read data: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError("data file is empty") from None
        expected = ["treatment", "outcome"] + [f"x{i}" for i in range(1, len(header) - 1)]
        for got, want in zip(header, expected):
            if got != want:
                raise ValidationError(f"bad data header: column '{got}' should be '{want}'")
        if len(header) < 2:
            raise ValidationError("data header needs treatment and outcome columns")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValidationError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                raise ValidationError(f"line {lineno}: non-numeric field") from None
    if not rows:
        raise ValidationError("data file has no rows")
    A = np.array(rows)
    if not np.all(np.isfinite(A)):
        raise ValidationError("data contains non-finite values")
    X = A[:, 2:] if A.shape[1] > 2 else None
    return CovariateTable.from_arrays(grid, A[:, 0], A[:, 1], X)


def _cell_columns(data: CovariateTable):
    return [f"x{i + 1}" for i in range(data.cells.shape[1])]


class Run:
    """Shared state for the data-driven subcommands."""

    def __init__(self, cfg: RunConfig, data_path, threads: int):
        self.cfg = cfg
        self.threads = threads
        self.grid = cfg.treatment_grid()
        self.u = cfg.utility_spec(self.grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptySpecWarning)
            self.cs = build_constraints(self.grid, cfg.shape)
        if data_path is None:
            raise ValidationError("--data is required for this command")
        self.data = read_data(data_path, self.grid)
        if self.u.benefit.ndim == 2 and self.u.benefit.shape[0] != self.data.n_cells:
            raise ValidationError("per-cell utility rows must match the number of covariate cells")
        self.raw = estimate(self.data, self.grid, cfg.estimator)
        if cfg.solver.repair:
            self.est, self.witness = project_feasible(
                self.raw, self.cs, cfg.solver.projection_tol, cfg.solver.projection_max_iter)
        else:
            self.est, self.witness = self.raw, None

    def regret(self):
        return regret_matrix(self.cs, self.est, self.u, self.cfg.criterion, threads=self.threads)


def cmd_bounds(run: Run, out):
    rows = []
    for i in range(run.data.n_cells):
        env = envelopes(run.cs, run.est.values[i], run.u.b(i), run.u.c(i))
        for j, d in enumerate(run.grid.values):
            rows.append((i, d, env.m_min[j], env.m_max[j], env.v_min[j], env.v_max[j]))
    write_csv(os.path.join(out, "bounds.csv"), ["cell_id", "d", "m_min", "m_max", "v_min", "v_max"], rows)
    _write_cells(run, out)


def _write_cells(run: Run, out):
    cols = _cell_columns(run.data)
    rows = [(i, *run.data.cells[i], run.data.counts[i]) for i in range(run.data.n_cells)]
    write_csv(os.path.join(out, "cells.csv"), ["cell_id", *cols, "count"], rows)


def policy_params(policy, grid, feature_names):
    if isinstance(policy, Constant):
        return [("constant", "level", policy.level), ("constant", "d", grid.values[policy.level])]
    rows = [("linear_score", f"beta_{feature_names[f]}", b) for f, b in zip(policy.features, policy.beta)]
    rows += [("linear_score", f"cutoff_{j + 1}", c) for j, c in enumerate(policy.cutoffs)]
    return rows


def read_policy_params(path, feature_names):
    """Inverse of the policy_params.csv writer."""
    with open(path, newline="", encoding="utf-8") as fh:
        recs = list(csv.DictReader(fh))
    kinds = {r["kind"] for r in recs}
    if kinds == {"constant"}:
        level = next(int(float(r["value"])) for r in recs if r["name"] == "level")
        return Constant(level)
    betas = [(r["name"][5:], float(r["value"])) for r in recs if r["name"].startswith("beta_")]
    cuts = [float(r["value"]) for r in recs if r["name"].startswith("cutoff_")]
    feats = tuple(feature_names.index(n) for n, _ in betas)
    return LinearScore(np.array([b for _, b in betas]), np.array(cuts), feats)


def cmd_solve(run: Run, out):
    rm = run.regret()
    res = solve_policy(rm, run.data.cells, run.data.weights, run.cfg.policy)
    grid = run.grid
    names = _cell_columns(run.data)
    levels = assign_many(res.policy, run.data.X, grid)
    write_csv(os.path.join(out, "policy.csv"), ["row", "cell_id", "level", "d"],
              [(r, run.data.cell_of_row[r], lv, grid.values[lv]) for r, lv in enumerate(levels)])
    write_csv(os.path.join(out, "policy_params.csv"), ["kind", "name", "value"],
              policy_params(res.policy, grid, names) + [(run.cfg.policy.kind, "objective", res.objective)])
    rows = []
    for i in range(rm.n_cells):
        for j, d in enumerate(grid.values):
            k = rm.binding_k[i, j]
            rows.append((i, d, rm.gamma[i, j], grid.values[k] if k >= 0 else "none"))
    write_csv(os.path.join(out, "gamma.csv"), ["cell_id", "d", "gamma", "worst_d"], rows)
    req = run.cfg.worstcase_levels
    if req is None:
        req = list(grid.values[~grid.observed_mask])
    for d in req:
        j = grid.index_of(d)
        rows = []
        for i in range(rm.n_cells):
            m = rm.m_star[i, j]
            v = run.u.value(m, i)
            rows.extend((i, grid.values[t], m[t], v[t]) for t in range(grid.J))
        write_csv(os.path.join(out, f"worstcase_{fmt(grid.values[j])}.csv"),
                  ["cell_id", "d", "m", "v"], rows)
    _write_cells(run, out)
    return res


def cmd_project(run: Run, out):
    raw = run.raw
    est, wit = project_feasible(raw, run.cs, run.cfg.solver.projection_tol,
                                run.cfg.solver.projection_max_iter)
    rows = []
    for i in range(raw.n_cells):
        dist = float(np.linalg.norm(est.values[i] - raw.values[i]))
        for k, d in enumerate(run.grid.observed_values):
            rows.append((i, d, raw.values[i, k], est.values[i, k], dist))
    write_csv(os.path.join(out, "project.csv"), ["cell_id", "d", "m_hat", "m_projected", "distance"], rows)
    _write_cells(run, out)


def build_dgp(cfg: RunConfig, seed: int) -> SyntheticDGP:
    spec = cfg.simulation.dgp
    if spec == "default":
        return default_dgp(seed)
    grid = cfg.treatment_grid()
    return SyntheticDGP(
        grid=grid,
        shape=cfg.shape,
        cells=np.asarray(spec["cells"], dtype=float).reshape(len(spec["cells"]), -1),
        probs=np.asarray(spec["probs"], dtype=float),
        m_true=np.asarray(spec["m_true"], dtype=float),
        utility=cfg.utility_spec(grid),
        outcome=spec.get("outcome", "bernoulli"),
        sigma=float(spec.get("sigma", 0.1)),
        treat_probs=None if spec.get("treat_probs") is None else np.asarray(spec["treat_probs"], dtype=float),
        seed=seed,
    )


def cmd_simulate(cfg: RunConfig, seed: int, out, threads: int):
    dgp = build_dgp(cfg, seed)
    recs = convergence_experiment(dgp, [int(n) for n in cfg.simulation.Ns], int(cfg.simulation.reps),
                                  cfg.estimator, cfg.policy, threads)
    write_csv(os.path.join(out, "sim_results.csv"), ["N", "rep", "seed", "regret", "optimum", "gap"],
              [(r.N, r.rep, r.seed, r.regret, r.optimum, r.gap) for r in recs])
    return recs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmrpolicy",
                                description="Minimax-regret treatment rules with shape restrictions")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [("bounds", "bounds on the response at every level"),
                       ("solve", "estimate the minimax-regret policy"),
                       ("simulate", "Monte Carlo regret-gap experiment"),
                       ("project", "report shape repair of the first-stage estimates")]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        s.add_argument("--data")
        s.add_argument("--out")
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ValidationError("--seed must fit in an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        out = args.out or cfg.output
        os.makedirs(out, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, cfg.seed, out, args.threads)
            return EXIT_OK
        run = Run(cfg, args.data, args.threads)
        {"bounds": cmd_bounds, "solve": cmd_solve, "project": cmd_project}[args.command](run, out)
        return EXIT_OK
    except (ValueError, UnboundedRegret) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (InfeasibleIdentifiedSet, InfeasibleShapeSet, MilpInfeasible) as exc:
        log.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except (NumericalFailure, NodeLimitExceeded, NoConvergence, RuntimeError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
