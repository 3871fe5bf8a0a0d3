import numpy as np
import pytest

from conftest import random_instances
from robustcmdp.feasibility import check_l0_feasible, compute_lambda_min
from robustcmdp.model import ConstraintSpec, CostModel, FiniteKernels, Mdp, PenaltyModel, Singleton
from robustcmdp.oracle import (
    CapExceeded,
    enumerate_and_evaluate,
    expected_penalty_dp,
    penalty_lattice,
    tree_evaluate,
    unconstrained_dp,
)


def test_single_strategy_instance():
    mdp = Mdp(1, 1, 4, np.ones((1, 1, 1)), CostModel(np.full((1, 1), 0.3), np.array([2.0])))
    cs = ConstraintSpec(PenaltyModel(np.zeros((1, 1)), np.zeros(1)), Singleton(mdp.nominal), 0.0)
    res = enumerate_and_evaluate(mdp, cs, 0, 0.0)
    assert res.feasible
    assert res.value == pytest.approx(4 * 0.3 + 2.0)
    assert res.strategy((0, 0, 0)) == 0


def test_single_path_worst_case_by_hand():
    """Deterministic kernels: the worst case is the worse kernel's path penalty."""
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = P[1, 0, 1] = P[2, 0, 2] = 1.0
    Q = np.zeros((3, 1, 3))
    Q[0, 0, 2] = Q[1, 0, 1] = Q[2, 0, 2] = 1.0
    mdp = Mdp(3, 1, 2, P, CostModel(np.zeros((3, 1)), np.zeros(3)))
    pen = PenaltyModel(np.array([[0.0], [0.5], [2.0]]), np.array([0.0, 0.0, 1.0]))
    cs = ConstraintSpec(pen, FiniteKernels(np.stack([P, Q])), 10.0)
    _, _, L, _ = tree_evaluate(mdp, cs, 0, 2)
    assert L.tolist() == [2.0 + 1.0]  # 0 -> 2 -> 2 under Q
    cs1 = cs.with_ambiguity(FiniteKernels(P[None]))
    assert tree_evaluate(mdp, cs1, 0, 2)[2].tolist() == [0.5 + 0.0]


def test_cap_is_enforced():
    _, (mdp, cs, x0) = next(random_instances(1))
    with pytest.raises(CapExceeded):
        tree_evaluate(mdp, cs, x0, mdp.horizon, cap=1)


def test_infeasible_matches_check():
    for _, (mdp, cs, x0) in random_instances(40):
        res = enumerate_and_evaluate(mdp, cs, x0, cs.l0)
        tab = compute_lambda_min(mdp, cs)
        assert res.feasible == check_l0_feasible(tab, x0, cs.l0)
        if not res.feasible:
            assert res.value == np.inf and res.strategy is None


def test_capped_feasibility_classification_agrees():
    from robustcmdp.solver import solve

    for _, (mdp, cs, x0) in random_instances(40):
        tab = compute_lambda_min(mdp, cs, cap_at_l0=True)
        values, _ = solve(mdp, cs, tab)
        oracle = enumerate_and_evaluate(mdp, cs, x0, cs.l0)
        assert (values.value(0, x0, cs.l0) < values.kappa) == oracle.feasible


def test_lattice_contains_lambda_min():
    for _, (mdp, cs, _) in random_instances(10):
        lat = penalty_lattice(mdp, cs)
        lam = compute_lambda_min(mdp, cs).lambda_min
        for t in range(1, mdp.horizon + 1):
            for x in range(mdp.n_states):
                assert np.isclose(lat[t][x].min(), lam[t, x], atol=1e-12)


def test_unconstrained_and_expected_dp_agree_with_enumeration():
    for _, (mdp, cs, x0) in random_instances(10):
        single = cs.with_ambiguity(Singleton(mdp.nominal))
        _, J, L, _ = tree_evaluate(mdp, single, x0, mdp.horizon)
        assert unconstrained_dp(mdp)[0][0, x0] == pytest.approx(J.min(), abs=1e-12)
        assert expected_penalty_dp(mdp, single)[0, x0] == pytest.approx(L.min(), abs=1e-12)


def test_random_instances_cover_both_outcomes():
    feasible = [enumerate_and_evaluate(m, c, x0, c.l0).feasible for _, (m, c, x0) in random_instances(40)]
    assert any(feasible) and not all(feasible)
