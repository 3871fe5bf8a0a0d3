import numpy as np
import pytest

from robustcmdp import gridworld as gw
from robustcmdp.model import ModelError


def test_default_dimensions(grid):
    spec, mdp, cs, _ = grid
    assert (mdp.n_states, mdp.n_actions, mdp.horizon) == (16, 5, 10)
    assert cs.l0 == 2.5
    assert len(cs.ambiguity) == 7
    assert cs.x0 == spec.index((1, 0))


def test_nominal_interior_row(grid):
    spec, mdp, _, _ = grid
    x = spec.index((1, 1))
    right = gw.ACTIONS.index((0, 1))
    row = mdp.nominal[x, right]
    # intended (1,2); clockwise slip of (0,1) is (-1,0) -> (0,1); counter-clockwise -> (2,1)
    assert row[spec.index((1, 2))] == 0.8
    assert row[spec.index((0, 1))] == 0.1
    assert row[spec.index((2, 1))] == 0.1
    assert row.sum() == 1.0


def test_attack_kernels_as_listed(grid):
    spec, _, cs, _ = grid
    x, down = spec.index((1, 1)), gw.ACTIONS.index((1, 0))
    got = [(K[x, down, spec.index((2, 1))], K[x, down, spec.index((1, 2))], K[x, down, spec.index((1, 0))])
           for K in cs.ambiguity.kernels]
    assert np.allclose(got, gw.ATTACK_TRIPLES)


def test_nominal_is_not_an_attack_kernel_but_validates(grid):
    _, mdp, cs, _ = grid
    diffs = np.abs(cs.ambiguity.kernels - mdp.nominal).max(axis=(1, 2, 3))
    assert np.isclose(diffs, 0).sum() == 1  # (0.8, 0.1, 0.1) is in the list


def test_stay_is_point_mass(grid):
    spec, mdp, cs, _ = grid
    stay = gw.ACTIONS.index((0, 0))
    for K in [mdp.nominal, *cs.ambiguity.kernels]:
        assert np.array_equal(K[:, stay], np.eye(spec.n_states))


def test_rows_sum_to_one_exactly(grid):
    _, mdp, cs, _ = grid
    for K in [mdp.nominal, *cs.ambiguity.kernels]:
        assert np.all(np.abs(K.sum(axis=2) - 1.0) <= 1e-15)
        assert np.all(K >= 0)


def test_edge_redistribution():
    spec = gw.GridSpec()
    # top-left corner moving right: clockwise slip (-1,0) is off-grid -> goes to (1,0)
    row = gw.transition_row(spec, (0, 0), (0, 1), (0.8, 0.1, 0.1))
    assert row[spec.index((0, 1))] == 0.8
    assert row[spec.index((1, 0))] == pytest.approx(0.2)
    # moving up from the top row: intended off-grid stays, slips sideways
    row = gw.transition_row(spec, (0, 1), (-1, 0), (0.8, 0.1, 0.1))
    assert row[spec.index((0, 1))] == 0.8
    assert row[spec.index((0, 0))] == 0.1 and row[spec.index((0, 2))] == 0.1
    # corner moving up: intended and one slip off-grid
    row = gw.transition_row(spec, (0, 0), (-1, 0), (0.7, 0.3, 0.0))
    assert row.sum() == pytest.approx(1.0)
    assert row[spec.index((0, 0))] == pytest.approx(0.7)
    assert row[spec.index((0, 1))] == pytest.approx(0.3)


def test_single_column_grid_slips_fall_back_to_intended():
    spec = gw.GridSpec(shape=(3, 1), target=(2, 0), trap=(1, 0), start=(0, 0))
    row = gw.transition_row(spec, (0, 0), (1, 0), (0.8, 0.1, 0.1))
    assert row[spec.index((1, 0))] == pytest.approx(1.0)
    row = gw.transition_row(spec, (0, 0), (-1, 0), (0.8, 0.1, 0.1))
    assert row[spec.index((0, 0))] == pytest.approx(1.0)


def test_no_mass_off_grid():
    spec = gw.GridSpec(shape=(3, 5), target=(2, 4), trap=(1, 1), start=(0, 0))
    mdp, cs, _ = gw.build(spec)
    assert mdp.nominal.shape == (15, 5, 15)
    assert np.allclose(mdp.nominal.sum(axis=2), 1.0)


def test_penalty_and_costs(grid):
    spec, mdp, cs, _ = grid
    trap = spec.index(spec.trap)
    assert np.flatnonzero(cs.penalty.terminal).tolist() == [trap]
    assert np.all(cs.penalty.stage[trap] == 1.0)
    assert cs.penalty.stage.sum() == mdp.n_actions
    assert np.all(mdp.cost.stage == 0.0)
    assert mdp.cost.terminal[spec.index((1, 0))] == 4
    assert mdp.cost.terminal[spec.index((3, 2))] == 0


def test_manhattan():
    assert gw.manhattan((3, 2), (3, 2)) == 0
    assert gw.manhattan((0, 0), (3, 2)) == 5
    assert gw.manhattan((1, 0), (3, 2)) == 4


def test_clockwise():
    assert gw.clockwise((1, 0)) == (0, 1)
    assert gw.clockwise((0, 1)) == (-1, 0)


def test_reflection_symmetry():
    """Mirroring columns maps the kernel onto itself with left/right and the slip
    directions swapped."""
    spec = gw.GridSpec()
    mirror = lambda c: (c[0], spec.shape[1] - 1 - c[1])
    ref = gw.GridSpec(target=mirror(spec.target), trap=mirror(spec.trap), start=mirror(spec.start))
    swap = {0: 0, 1: 1, 2: 2, 3: 4, 4: 3}
    perm = [spec.index(mirror(spec.cell(x))) for x in range(spec.n_states)]
    for tri in gw.ATTACK_TRIPLES:
        P = gw.kernel(spec, tri)
        R = gw.kernel(ref, (tri[0], tri[2], tri[1]))
        for x in range(spec.n_states):
            for a in range(5):
                assert np.array_equal(R[perm[x], swap[a]][perm], P[x, a])
    m1, _, _ = gw.build(spec)
    m2, _, _ = gw.build(ref)
    assert np.array_equal(m2.cost.terminal[perm], m1.cost.terminal)


def test_spec_validation():
    with pytest.raises(ModelError):
        gw.GridSpec(target=(5, 5))
    with pytest.raises(ModelError):
        gw.GridSpec(trap=(3, 2))
    with pytest.raises(ModelError):
        gw.GridSpec(p_intend=0.9)
    with pytest.raises(ModelError):
        gw.GridSpec(ambiguity=((0.5, 0.4, 0.0),))
