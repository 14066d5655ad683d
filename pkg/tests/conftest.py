import logging

import numpy as np
import pytest

from groupsps.policy import BasisConfig, GroupStructure, PolicyParams
from groupsps.variational import HyperParams, Observations, init_q


def random_instance(rng, D=4, K=3, J=5, H=6, groups=None, rank=1):
    """Random weighted batch and a warm-started posterior around it."""
    groups = groups or GroupStructure(tuple(tuple(range(i, min(i + 2, D))) for i in range(0, D, 2)))
    basis = BasisConfig(20, J)
    tau = rng.uniform(0.5, 3.0, groups.num_groups)
    params = PolicyParams(rng.normal(size=(D, J)), 0.5 * rng.normal(size=(D, K)), tau, groups, basis)
    thetas = rng.normal(size=(H, D, J)) * rng.uniform(0.3, 2.0)
    d = rng.dirichlet(np.ones(H)) * H
    obs = Observations.from_thetas(list(thetas), d)
    hyper = HyperParams(K=K, rank=min(rank, K))
    return obs, init_q(params, obs, hyper), hyper, params


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.ERROR)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
