import numpy as np
import pytest

from robustcmdp import gridworld as gw
from robustcmdp.baselines import MODES, solve_mode

#: criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def grid():
    spec = gw.GridSpec()
    mdp, cs, support = gw.build(spec)
    return spec, mdp, cs, support


@pytest.fixture(scope="session")
def solved(grid):
    """(ValueTable, AugmentedPolicy) per mode on the default gridworld."""
    _, mdp, cs, _ = grid
    return {mode: solve_mode(mdp, cs, mode) for mode in MODES}


def random_instances(count, start=0, **kw):
    from robustcmdp.oracle import random_instance

    for seed in range(start, start + count):
        yield seed, random_instance(np.random.default_rng(seed), **kw)
