"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import filecmp
import time

import numpy as np
import yaml

from mmrpolicy.cli import main
from mmrpolicy.core import (Constant, RegretMatrix, ResponseEstimate, TreatmentGrid, UtilitySpec,
                            assign_many)
from mmrpolicy.firststage import extension, project_feasible
from mmrpolicy.linprog import LinearProgram, solve_lp
from mmrpolicy.policy import PolicyClassSpec, solve_constant, solve_linear_score
from mmrpolicy.regret import (envelopes, gamma_j, gamma_j_primal, gamma_jk, regret_direction,
                              regret_matrix)
from mmrpolicy.shape import ShapeSpec, build_constraints, is_feasible
from mmrpolicy.simlab import (SyntheticDGP, convergence_experiment, default_dgp, noiseless_gap,
                              rate_slope)
from oracles import (brute_linear_score, grid_gamma, grid_identified_set, random_lp,
                     random_shape_instance, random_shaped_curve)

DC01 = dict(monotone="decreasing", curvature="convex", bounds=(0.0, 1.0))


def _cs(values, observed, **shape):
    g = TreatmentGrid.from_levels(values, observed)
    return g, build_constraints(g, ShapeSpec(**shape))


def _random_cs(rng, feasible=True):
    values, obs, shape, w, m = random_shape_instance(rng, feasible=feasible)
    g = TreatmentGrid(values, np.isin(np.arange(values.size), obs))
    return g, build_constraints(g, ShapeSpec(**shape)), shape, w, m


def test_criterion_1_three_level_oracle(report):
    t = time.perf_counter()
    g, cs = _cs([0, 1, 2], [0, 2], **DC01)
    b, c = g.values, np.zeros(3)
    gam = np.array([gamma_j(cs, [1.0, 0.0], b, c, j)[0] for j in range(3)])
    res = solve_constant(regret_matrix(cs, ResponseEstimate([[1.0, 0.0]]), UtilitySpec(b, c)), [1.0])
    elapsed = time.perf_counter() - t
    M = grid_identified_set(g.values, [0, 2], [1.0, 0.0], step=0.005, **DC01)
    _, ref = grid_gamma(M, b, c)
    err = max(np.abs(gam - ref).max(), np.abs(gam - [0.5, 0, 0.5]).max(),
              abs(res.objective - ref.min()), abs(res.objective))
    ok = err <= 1e-8 and res.policy == Constant(int(ref.argmin())) == Constant(1) and elapsed < 1
    report(1, ok, f"gamma={np.round(gam, 10).tolist()} level={res.policy.level} "
                  f"err={err:.1e} time={elapsed:.2f}s")
    assert ok


def test_criterion_2_envelopes_and_non_rectangularity(report):
    t = time.perf_counter()
    g, cs = _cs([0, 1, 2, 3], [0, 3], **DC01)
    b, c = g.values, np.zeros(4)
    env = envelopes(cs, [0.9, 0.0], b, c)
    gap = max(env.v_max[k] - env.v_min[j] - gamma_jk(cs, [0.9, 0.0], b, c, j, k)[0]
              for j in range(4) for k in range(4))
    elapsed = time.perf_counter() - t
    M = grid_identified_set(g.values, [0, 3], [0.9, 0.0], step=0.005, **DC01)
    err_ref = max(np.abs(env.m_max - M.max(axis=0)).max(), np.abs(env.m_min - M.min(axis=0)).max())
    err_exact = max(np.abs(env.m_max - [0.9, 0.6, 0.3, 0]).max(), np.abs(env.m_min - [0.9, 0, 0, 0]).max())
    ok = err_ref <= 1e-6 and err_exact <= 1e-6 and gap > 0.01 and elapsed < 1
    report(2, ok, f"upper={(np.round(env.m_max, 9) + 0.0).tolist()} lower={(np.round(env.m_min, 9) + 0.0).tolist()} "
                  f"oracle_err={err_ref:.1e} max_gap={gap:.4f} time={elapsed:.2f}s")
    assert ok


def test_criterion_3_strong_duality(report):
    rng = np.random.default_rng(3)
    t = time.perf_counter()
    worst_gap = worst_cs = 0.0
    for _ in range(1000):
        lp = LinearProgram(**random_lp(rng, 40, 120))
        s = solve_lp(lp)
        assert s.optimal
        worst_gap = max(worst_gap, abs(s.objective - s.dual_objective(lp)) / (1 + abs(s.objective)))
        worst_cs = max(worst_cs, s.complementarity_residual(lp))
    elapsed = time.perf_counter() - t
    ok = worst_gap <= 1e-8 and worst_cs <= 1e-8 and elapsed < 30
    report(3, ok, f"rel_gap={worst_gap:.1e} comp_slack={worst_cs:.1e} time={elapsed:.1f}s")
    assert ok


def test_criterion_4_dual_equals_primal(report):
    rng = np.random.default_rng(4)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        g, cs, _, w, _ = _random_cs(rng)
        b = rng.uniform(-1, 1, g.J)
        c = rng.uniform(-0.5, 0.5, g.J)
        for j in range(g.J):
            worst = max(worst, abs(gamma_j(cs, w, b, c, j)[0] - gamma_j_primal(cs, w, b, c, j)[0]))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-8 and elapsed < 30
    report(4, ok, f"max|dual-primal|={worst:.1e} time={elapsed:.1f}s")
    assert ok


def test_criterion_5_lipschitz_in_first_stage(report):
    # bound checked as stated: |change| <= |b_jk| |delta| + 1e-9
    rng = np.random.default_rng(5)
    t = time.perf_counter()
    inst = checks = viol = 0
    worst = 0.0
    while inst < 200:
        g, cs, _, w, _ = _random_cs(rng)
        b = rng.uniform(0, 1, g.J)
        c = rng.uniform(0, 0.2, g.J)
        pert = []
        for delta in (1e-3, 1e-2):
            # keep the perturbed vector inside the extendable set so both sides are defined
            for _ in range(20):
                D = rng.normal(size=w.size)
                D *= delta / np.linalg.norm(D)
                if extension(cs, w + D) is not None:
                    pert.append((delta, D))
                    break
        if len(pert) < 2:
            continue
        inst += 1
        for j in range(g.J):
            for k in range(g.J):
                base = gamma_jk(cs, w, b, c, j, k)[0]
                bound = np.linalg.norm(regret_direction(b, c, j, k)[0])
                for delta, D in pert:
                    ex = abs(gamma_jk(cs, w + D, b, c, j, k)[0] - base) - bound * delta
                    checks += 1
                    if ex > 1e-9:
                        viol += 1
                        worst = max(worst, ex / (bound * delta))
    elapsed = time.perf_counter() - t
    ok = viol == 0 and elapsed < 30
    report(5, ok, f"violations={viol}/{checks} worst_excess={worst:.2f}x bound time={elapsed:.1f}s")
    assert ok


def test_criterion_6_milp_exact(report):
    rng = np.random.default_rng(6)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 13))
        J = int(rng.integers(2, 7))
        K = int(rng.integers(1, 3))
        cells = rng.uniform(0, 1, (n, K))
        gam = rng.uniform(0, 1, (n, J))
        w = rng.dirichlet(np.ones(n))
        res = solve_linear_score(RegretMatrix(gam), cells, w,
                                 PolicyClassSpec("linear_score", tuple(range(K))))
        worst = max(worst, abs(res.objective - brute_linear_score(gam, w, cells)))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-6 and elapsed < 120
    report(6, ok, f"max|milp-enum|={worst:.1e} time={elapsed:.1f}s")
    assert ok


def test_criterion_7_convergence_rate(report):
    t = time.perf_counter()
    recs = convergence_experiment(default_dgp(), (400, 1600, 6400), 200,
                                  class_spec=PolicyClassSpec("linear_score", (0,)))
    elapsed = time.perf_counter() - t
    Ns, means, slope = rate_slope(recs)
    min_gap = min(r.gap for r in recs)
    ok = (bool(np.all(np.diff(means) < 0)) and -0.8 <= slope <= -0.2 and min_gap >= -1e-9
          and elapsed < 600)
    report(7, ok, f"mean_gaps={np.round(means, 6).tolist()} slope={slope:.3f} "
                  f"min_gap={min_gap:.1e} time={elapsed:.0f}s")
    assert ok


def _random_dgp(rng):
    while True:
        g, cs, shape, _, _ = _random_cs(rng)
        n = int(rng.integers(2, 7))
        m = np.array([random_shaped_curve(rng, g.values, shape["monotone"], shape["curvature"])
                      for _ in range(n)])
        if all(is_feasible(cs, row, 1e-12) for row in m):
            break
    cells = np.sort(rng.uniform(0, 1, (n, 1)), axis=0)
    u = UtilitySpec(rng.uniform(0, 1, g.J), rng.uniform(0, 0.2, g.J))
    return SyntheticDGP(g, ShapeSpec(**shape), cells, rng.dirichlet(np.ones(n)), m, u)


def test_criterion_8_noiseless_consistency(report):
    rng = np.random.default_rng(8)
    spec = PolicyClassSpec("linear_score", (0,))
    t = time.perf_counter()
    worst, same = 0.0, 0
    for _ in range(20):
        dgp = _random_dgp(rng)
        res, val, opt = noiseless_gap(dgp, spec)
        worst = max(worst, abs(val - opt.objective))
        same += np.array_equal(assign_many(res.policy, dgp.cells, dgp.grid),
                               assign_many(opt.policy, dgp.cells, dgp.grid))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-9 and same == 20 and elapsed < 30
    report(8, ok, f"max_gap={worst:.1e} identical_policies={same}/20 time={elapsed:.1f}s")
    assert ok


def test_criterion_9_projection_contract(report):
    rng = np.random.default_rng(9)
    t = time.perf_counter()
    done = 0
    bad_ext, worst_idem, worst_opt = 0, 0.0, 0.0
    while done < 200:
        g, cs, shape, _, _ = _random_cs(rng, feasible=False)
        w = rng.uniform(-0.2, 1.2, g.J0)
        if extension(cs, w) is not None:
            continue
        done += 1
        out, wit = project_feasible(ResponseEstimate([w]), cs)
        y = out.values[0]
        bad_ext += not (extension(cs, y) is not None and is_feasible(cs, wit[0], 1e-7)
                        and np.allclose(cs.F @ wit[0], y, rtol=0, atol=1e-7))
        again, _ = project_feasible(out, cs)
        worst_idem = max(worst_idem, np.abs(again.values[0] - y).max())
        d = np.linalg.norm(y - w)
        for _ in range(100):
            other = random_shaped_curve(rng, g.values, shape["monotone"], shape["curvature"])
            other = other[g.observed_index]
            worst_opt = max(worst_opt, d - np.linalg.norm(other - w))
    elapsed = time.perf_counter() - t
    ok = bad_ext == 0 and worst_idem <= 1e-8 and worst_opt <= 1e-7 and elapsed < 60
    report(9, ok, f"no_extension={bad_ext}/200 idempotence={worst_idem:.1e} "
                  f"max(d_proj-d_witness)={worst_opt:.1e} time={elapsed:.1f}s")
    assert ok


def test_criterion_10_subsidy_anchor(report):
    t = time.perf_counter()
    g, cs = _cs(np.arange(0, 35.01, 2.5), [0, 15, 25, 35], **DC01)
    u = UtilitySpec.subsidy(g, 35, 35)
    rm = regret_matrix(cs, ResponseEstimate([[0.95, 0.3, 0.15, 0.1]]), u)
    res = solve_constant(rm, [1.0])
    elapsed = time.perf_counter() - t
    d = g.values[res.policy.level]
    ok = 5 < d < 15 and not g.observed_mask[res.policy.level] and elapsed < 5
    report(10, ok, f"selected price={d:g} max_regret={res.objective:.4f} time={elapsed:.2f}s")
    assert ok


def test_criterion_11_determinism(report, tmp_path):
    rng = np.random.default_rng(11)
    rows = []
    for x in (0.0, 1.0, 2.0):
        for t, p in ((0, 0.9 - 0.1 * x), (2, 0.1 + 0.05 * x)):
            rows += [(t, int(rng.random() < p), x) for _ in range(50)]
    data = tmp_path / "data.csv"
    data.write_text("treatment,outcome,x1\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows))
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({
        "grid": [0, 1, 2], "observed": [0, 2], "shape": {"monotone": "decreasing", "bounds": [0, 1]},
        "utility": {"benefit": [0, 1, 2]}, "policy": {"kind": "linear_score", "features": [0]},
        "simulation": {"Ns": [400, 800], "reps": 3}}))
    runs = []
    for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / tag
        for cmd in ("bounds", "solve", "project"):
            assert main([cmd, "--config", str(cfg), "--data", str(data), "--out", str(out),
                         "--seed", "7", "--threads", threads]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "7",
                     "--threads", threads]) == 0
        runs.append(out)
    names = sorted(p.name for p in runs[0].iterdir())
    same = all(sorted(p.name for p in r.iterdir()) == names for r in runs) and all(
        filecmp.cmp(runs[0] / n, r / n, shallow=False) for r in runs[1:] for n in names)
    report(11, same, f"files={names} byte_identical={same}")
    assert same
