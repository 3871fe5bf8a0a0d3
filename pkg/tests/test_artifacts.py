import json

import numpy as np
import pytest

from robustcmdp import gridworld as gw
from robustcmdp.artifacts import (
    ArtifactError,
    feasibility_csv,
    policy_from_json,
    policy_to_json,
    values_csv,
)
from robustcmdp.problem_file import dump_problem
from robustcmdp.simulate import AdversaryModel, run


@pytest.fixture(scope="module")
def artifact_text(grid, solved):
    spec, mdp, cs, _ = grid
    values, policy = solved["robust"]
    return policy_to_json(dump_problem(mdp, cs, gw.meta(spec)), "robust", "reachable", values, policy)


def test_header(artifact_text, solved):
    doc = json.loads(artifact_text)
    assert doc["format"] == "robustcmdp-policy" and doc["version"] == 1
    head = doc["header"]
    values, policy = solved["robust"]
    assert head["delta"] == policy.tables.delta
    assert head["kappa"] == values.kappa == 5.0 + 1.0
    assert head["grid_sizes"] == policy.tables.grid_sizes()
    assert head["approximate"] is False


def test_round_trip(artifact_text, grid, solved):
    spec, mdp, cs, _ = grid
    values, policy = solved["robust"]
    art = policy_from_json(artifact_text)
    assert art.mode == "robust"
    for t in range(mdp.horizon):
        for x in range(mdp.n_states):
            assert np.array_equal(art.policy.actions[t][x], policy.actions[t][x])
            assert np.array_equal(art.policy.next_index[t][x], policy.next_index[t][x])
            assert np.array_equal(art.values[t][x], values.values[t][x])
    assert np.array_equal(art.policy.tables.lambda_min, policy.tables.lambda_min)
    x0 = spec.index((0, 1))
    a = run(mdp, cs, policy, x0, AdversaryModel(), runs=100, steps=40, seed=3)
    b = run(art.mdp, art.environment, art.policy, x0, AdversaryModel(), runs=100, steps=40, seed=3)
    assert a.to_json(traces=True) == b.to_json(traces=True)
    assert art.value_table.value(0, x0, 2.5) == values.value(0, x0, 2.5)


def test_serialization_is_deterministic(artifact_text, grid, solved):
    spec, mdp, cs, _ = grid
    values, policy = solved["robust"]
    again = policy_to_json(dump_problem(mdp, cs, gw.meta(spec)), "robust", "reachable", values, policy)
    assert again == artifact_text


def test_unknown_version_is_rejected(artifact_text):
    doc = json.loads(artifact_text)
    doc["version"] = 2
    with pytest.raises(ArtifactError, match="version 2"):
        policy_from_json(json.dumps(doc))
    with pytest.raises(ArtifactError, match="not a robustcmdp-policy"):
        policy_from_json(json.dumps({"format": "other"}))
    with pytest.raises(ArtifactError, match="not valid JSON"):
        policy_from_json("{")
    del doc["lambda_min"]
    doc["version"] = 1
    with pytest.raises(ArtifactError, match="lambda_min"):
        policy_from_json(json.dumps(doc))


def test_csv_dumps(solved):
    values, policy = solved["robust"]
    feas = feasibility_csv(policy.tables).splitlines()
    assert feas[0] == "t,x,lambda_min,l_cap,grid_size"
    assert len(feas) == 1 + 11 * 16
    t, x, lam, cap, size = feas[1 + 16 * 10 + 9].split(",")
    assert (t, x, float(lam), float(cap), int(size)) == ("10", "9", 1.0, 1.0, 1)
    vals = values_csv(values).splitlines()
    assert vals[0] == "t,x,grid_index,bound,value,feasible"
    assert len(vals) == 1 + sum(map(sum, policy.tables.grid_sizes()))
