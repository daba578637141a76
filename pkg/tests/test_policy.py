import numpy as np
import pytest

from mmrpolicy.core import (Constant, LinearScore, RegretMatrix, TreatmentGrid, ValidationError,
                            assign_many)
from mmrpolicy.policy import (PolicyClassSpec, policy_objective, solve_constant,
                              solve_linear_score, solve_policy)
from oracles import brute_linear_score

LIN1 = PolicyClassSpec("linear_score", (0,))


def test_constant_three_level():
    res = solve_constant(RegretMatrix(np.array([[0.5, 0.0, 0.5]])), [1.0])
    assert res.policy == Constant(1)
    assert res.objective == 0.0


def test_constant_ties_go_low():
    res = solve_constant(RegretMatrix(np.full((3, 4), 0.2)), np.full(3, 1 / 3))
    assert res.policy.level == 0


def test_split_recovered():
    # cell 0 wants level 0, cell 1 wants level 1
    gam = np.array([[0.0, 1.0], [1.0, 0.0]])
    cells = np.array([[0.0], [1.0]])
    res = solve_linear_score(RegretMatrix(gam), cells, [0.5, 0.5], LIN1)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_array_equal(res.levels, [0, 1])
    g = TreatmentGrid.from_levels([0, 1], [0])
    np.testing.assert_array_equal(assign_many(res.policy, cells, g), [0, 1])


def test_sign_constraint_blocks_decreasing_rule():
    # optimum would need a score decreasing in x; class only allows increasing
    gam = np.array([[1.0, 0.0], [0.0, 1.0]])
    res = solve_linear_score(RegretMatrix(gam), [[0.0], [1.0]], [0.5, 0.5], LIN1)
    assert res.objective == pytest.approx(0.5, abs=1e-9)


def test_constant_optimal_instance():
    rng = np.random.default_rng(0)
    gam = rng.uniform(0.5, 1, (6, 4))
    gam[:, 2] = 0.1
    cells = rng.uniform(0, 1, (6, 2))
    w = np.full(6, 1 / 6)
    rm = RegretMatrix(gam)
    res = solve_linear_score(rm, cells, w, PolicyClassSpec("linear_score", (0, 1)))
    assert res.objective == pytest.approx(solve_constant(rm, w).objective, abs=1e-9)
    np.testing.assert_array_equal(res.levels, 2)


def test_scaling_returned_policy():
    rng = np.random.default_rng(5)
    gam = rng.uniform(0, 1, (8, 4))
    cells = rng.uniform(0, 10, (8, 2))
    w = rng.dirichlet(np.ones(8))
    rm = RegretMatrix(gam)
    res = solve_linear_score(rm, cells, w, PolicyClassSpec("linear_score", (0, 1)))
    g = TreatmentGrid.from_levels([0, 1, 2, 3], [0])
    doubled = LinearScore(2 * res.policy.beta, 2 * res.policy.cutoffs, res.policy.features)
    lv = assign_many(doubled, cells, g)
    np.testing.assert_array_equal(lv, res.levels)
    assert policy_objective(rm, w, lv) == pytest.approx(res.objective, abs=1e-9)


def test_matches_enumeration_random():
    rng = np.random.default_rng(9)
    for _ in range(15):
        n = int(rng.integers(2, 9))
        J = int(rng.integers(2, 5))
        K = int(rng.integers(1, 3))
        cells = rng.uniform(0, 1, (n, K))
        gam = rng.uniform(0, 1, (n, J))
        w = rng.dirichlet(np.ones(n))
        rm = RegretMatrix(gam)
        res = solve_linear_score(rm, cells, w, PolicyClassSpec("linear_score", tuple(range(K))))
        assert res.objective == pytest.approx(brute_linear_score(gam, w, cells), abs=1e-6)
        assert np.all(np.diff(res.policy.cutoffs) >= 0)
        assert res.objective <= solve_constant(rm, w).objective + 1e-9
        g = TreatmentGrid.from_levels(np.arange(J), [0])
        np.testing.assert_array_equal(assign_many(res.policy, cells, g), res.levels)
        assert policy_objective(rm, w, res.levels) == pytest.approx(res.objective, abs=1e-9)


def test_tied_scores_share_a_level():
    gam = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = solve_linear_score(RegretMatrix(gam), [[0.5], [0.5]], [0.3, 0.7], LIN1)
    assert res.levels[0] == res.levels[1]
    assert res.objective == pytest.approx(0.3)


def test_box_above_scores_forces_lowest_level():
    gam = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    spec = PolicyClassSpec("linear_score", (0,), cutoff_box=(5.0, 6.0), normalize=True)
    # every score is in [0, 1] and cutoffs must sit above 5: all cells get level 0
    res = solve_linear_score(RegretMatrix(gam), [[0.0], [0.5], [1.0]], np.full(3, 1 / 3), spec)
    np.testing.assert_array_equal(res.levels, 0)


def test_spec_validation():
    with pytest.raises(ValidationError):
        PolicyClassSpec("tree")
    with pytest.raises(ValidationError):
        PolicyClassSpec(epsilon=0)
    with pytest.raises(ValidationError):
        PolicyClassSpec(cutoff_box=(1, 1))


def test_dispatch():
    rm = RegretMatrix(np.array([[0.3, 0.1], [0.2, 0.4]]))
    assert solve_policy(rm, [[0], [1]], [0.5, 0.5], PolicyClassSpec()).policy == Constant(0)
