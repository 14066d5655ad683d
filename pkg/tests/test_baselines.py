import numpy as np
import pytest

from groupsps.baselines import BaselineConfig, diagonal_gaussian_ps, diagonal_update, random_search
from groupsps.learner import LearnConfig, learn
from groupsps.policy import BasisConfig, GroupStructure, initial_params
from groupsps.stubs import ConstantEnv, QuadraticEnv
from groupsps.variational import HyperParams


def test_single_heavy_rollout_is_the_mean(rng):
    thetas = rng.normal(size=(4, 3, 5))
    d = np.array([0.0, 4.0, 0.0, 0.0])
    M, prec = diagonal_update(thetas, d, HyperParams(K=0, rank=0))
    np.testing.assert_array_equal(M, thetas[1])
    assert np.all(prec > 0)


def test_precision_positive(rng):
    for _ in range(20):
        thetas = rng.normal(size=(6, 4, 3)) * rng.uniform(1e-6, 1e3)
        _, prec = diagonal_update(thetas, rng.dirichlet(np.ones(6)) * 6, HyperParams(K=0, rank=0))
        assert np.all(prec > 0) and np.all(np.isfinite(prec))


def test_constant_env_random_search_keeps_first(rng):
    tr = random_search(ConstantEnv(2.0), np.zeros((3, 4)), BaselineConfig("random_search", 3, 5), 0)
    assert all(r.mean_policy_reward == 2.0 for r in tr.records)
    first = np.array(tr.records[0].params["M"])
    assert all(np.array_equal(np.array(r.params["M"]), first) for r in tr.records)


def test_zero_sigma_never_moves():
    M0 = np.arange(12.0).reshape(3, 4)
    tr = random_search(QuadraticEnv(np.zeros((3, 4))), M0, BaselineConfig("random_search", 3, 4, sigma=0.0), 0)
    for r in tr.records:
        np.testing.assert_array_equal(r.params["M"], M0)


def test_equal_budget_trace_schema():
    env = QuadraticEnv(np.ones((4, 5)))
    init = initial_params(GroupStructure(((0, 1), (2, 3))), BasisConfig(20, 5))
    a = diagonal_gaussian_ps(env, init.M, BaselineConfig(iterations=2, H=6), 0)
    b = random_search(env, init.M, BaselineConfig("random_search", 2, 6), 0)
    c = learn(env, init, LearnConfig(iterations=2, H=6), 0)
    assert a.executions == b.executions == c.executions == 14
    assert a.to_csv().splitlines()[0].split(",")[:5] == c.to_csv().splitlines()[0].split(",")[:5]


def test_random_search_slower_than_groups_on_quadratic():
    wins = 0
    for s in range(5):
        rng = np.random.default_rng(100 + s)
        target = rng.normal(size=(4, 5))
        init = initial_params(GroupStructure(((0, 1), (2, 3))), BasisConfig(20, 5), rng=rng)
        g = learn(QuadraticEnv(target), init, LearnConfig(iterations=6, H=20), s)
        r = random_search(QuadraticEnv(target), init.M, BaselineConfig("random_search", 6, 20, sigma=0.5), s)
        wins += g.mean_rewards()[-1] > r.mean_rewards()[-1]
    assert wins >= 4


@pytest.mark.parametrize("kw", [dict(method="cmaes"), dict(sigma=-1.0), dict(init_var=0.0)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        BaselineConfig(**kw)
