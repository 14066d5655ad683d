from dataclasses import replace

import numpy as np
import pytest
from conftest import random_instance
from oracles import weighted_column_lstsq, weighted_fa_fixed_point

from groupsps.policy import BasisConfig, GroupStructure, PolicyParams
from groupsps.variational import (UPDATE_ORDER, HyperParams, Observations, coordinate_update, elbo,
                                  fit, init_q, low_rank_log_projection, update_qAlpha, update_qM,
                                  update_qTau, update_qW, update_qZ)


def frozen_precisions(q, tau, alpha):
    """Gamma factors whose expectations equal ``tau`` and ``alpha``."""
    tau, alpha = np.asarray(tau, float), np.asarray(alpha, float)
    return replace(q, tau_shape=tau.copy(), tau_rate=np.ones_like(tau),
                   alpha_shape=alpha.copy(), alpha_rate=np.ones_like(alpha))


def obs_from(rng, D, J, H):
    thetas = rng.normal(size=(H, D, J))
    d = rng.dirichlet(np.ones(H)) * H
    return Observations.from_thetas(list(thetas), d)


class TestLatentUpdate:
    def test_zero_loadings(self, rng):
        obs, q, hyper, _ = random_instance(rng)
        q = replace(q, W_mean=np.zeros_like(q.W_mean), W_cov=np.zeros_like(q.W_cov))
        q2 = update_qZ(obs, q, hyper)
        assert np.all(q2.Z_mean == 0)
        np.testing.assert_allclose(q2.Z_cov, np.eye(q.K), atol=1e-15)

    def test_scalar_hand_formula(self):
        gs = GroupStructure(((0, 1),))
        y, m, w, s, tau = np.array([0.7, -1.2]), np.array([0.1, 0.3]), np.array([0.4, -0.9]), 0.05, 2.5
        params = PolicyParams(m[:, None], w[:, None], [tau], gs, BasisConfig(2, 1))
        obs = Observations(y[None, :], np.array([0]), np.array([1.0]), 1)
        hyper = HyperParams(K=1, rank=1)
        q = init_q(params, obs, hyper)
        q = replace(frozen_precisions(q, [tau], [[1.0]]), W_cov=np.full((1, 1, 1), s))
        q = update_qZ(obs, q, hyper)
        denom = 1.0 + tau * (w @ w + 2 * s)
        assert q.Z_cov[0, 0] == pytest.approx(1.0 / denom, rel=1e-14)
        assert q.Z_mean[0, 0] == pytest.approx(tau * w @ (y - m) / denom, rel=1e-14)


class TestLoadingUpdate:
    def test_no_weight_gives_prior(self, rng):
        obs, q, hyper, _ = random_instance(rng)
        obs = replace(obs, weight=np.zeros_like(obs.weight))
        q2 = update_qW(obs, q, hyper)
        assert np.all(q2.W_mean == 0)
        for m in range(q.groups.num_groups):
            np.testing.assert_allclose(q2.W_cov[m], np.diag(1.0 / q.E_alpha[m]))

    def test_scalar_hand_formula(self):
        gs = GroupStructure(((0,),))
        y, m, mu, sz, tau, a = 1.3, -0.2, 0.8, 0.3, 1.7, 0.6
        params = PolicyParams([[m]], [[0.5]], [tau], gs, BasisConfig(2, 1))
        obs = Observations(np.array([[y]]), np.array([0]), np.array([2.0]), 1)
        hyper = HyperParams(K=1, rank=1)
        q = frozen_precisions(init_q(params, obs, hyper), [tau], [[a]])
        q = replace(q, Z_mean=np.array([[mu]]), Z_cov=np.array([[sz]]))
        q = update_qW(obs, q, hyper)
        prec = a + tau * 2.0 * (mu ** 2 + sz)
        assert q.W_cov[0, 0, 0] == pytest.approx(1.0 / prec, rel=1e-14)
        assert q.W_mean[0, 0] == pytest.approx(tau * 2.0 * (y - m) * mu / prec, rel=1e-14)


class TestMeanUpdate:
    def test_single_rollout(self, rng):
        theta = rng.normal(size=(4, 5))
        obs = Observations.from_thetas([theta], [1.0])
        params = PolicyParams(np.zeros((4, 5)), np.zeros((4, 3)), [1.0, 1.0],
                              GroupStructure(((0, 1), (2, 3))), BasisConfig(20, 5))
        q = update_qM(obs, init_q(params, obs, HyperParams()))
        np.testing.assert_array_equal(q.M, theta)

    def test_two_rollouts_mean(self, rng):
        a, b = rng.normal(size=(2, 4, 5))
        obs = Observations.from_thetas([a, b], [1.0, 1.0])
        params = PolicyParams(np.zeros((4, 5)), np.zeros((4, 3)), [1.0, 1.0],
                              GroupStructure(((0, 1), (2, 3))), BasisConfig(20, 5))
        q = init_q(params, obs, HyperParams())
        q = update_qM(obs, replace(q, W_mean=np.zeros((4, 3))))
        np.testing.assert_allclose(q.M, (a + b) / 2, rtol=0, atol=1e-15)

    def test_planted_latents_match_lstsq(self, rng):
        obs, q, hyper, _ = random_instance(rng, D=4, K=2, J=3, H=5)
        q = replace(q, Z_mean=rng.normal(size=q.Z_mean.shape), W_mean=rng.normal(size=q.W_mean.shape))
        q2 = update_qM(obs, q)
        ref = weighted_column_lstsq(obs.Y, obs.col, obs.weight, q.Z_mean, q.W_mean, obs.J)
        np.testing.assert_allclose(q2.M, ref, rtol=0, atol=1e-10)


class TestAlphaUpdate:
    def groups3(self, rng, W):
        gs = GroupStructure(((0, 1), (2, 3), (4, 5)))
        params = PolicyParams(np.zeros((6, 2)), W, [1.0] * 3, gs, BasisConfig(4, 2))
        obs = obs_from(rng, 6, 2, 3)
        hyper = HyperParams(K=3, rank=1)
        return init_q(params, obs, hyper), hyper

    def test_zero_loadings_constant(self, rng):
        q, hyper = self.groups3(rng, np.ones((6, 3)))
        q = replace(q, W_mean=np.zeros((6, 3)), W_cov=np.zeros_like(q.W_cov))
        q2 = update_qAlpha(q, hyper)
        np.testing.assert_allclose(q2.E_alpha, (hyper.a_alpha + 1.0) / hyper.b_alpha, rtol=1e-12)

    def test_dominant_column_keeps_order(self, rng):
        W = 0.05 * rng.normal(size=(6, 3))
        W[:, 1] = rng.uniform(2.0, 3.0, 6)
        q, hyper = self.groups3(rng, W)
        q2 = update_qAlpha(q, hyper)
        for m in range(3):
            assert q2.E_alpha[m, 1] < q2.E_alpha[m, 0] and q2.E_alpha[m, 1] < q2.E_alpha[m, 2]

    def test_projection_structure(self, rng):
        u, v = rng.normal(size=4), rng.normal(size=3)
        L = np.outer(u, v) + rng.normal(size=(4, 1)) + rng.normal(size=(1, 3))
        np.testing.assert_allclose(low_rank_log_projection(L, 1), L, atol=1e-12)
        R = rng.normal(size=(4, 3))
        P = low_rank_log_projection(R, 1)
        C = P - P.mean(1, keepdims=True) - P.mean(0, keepdims=True) + P.mean()
        assert np.linalg.matrix_rank(C, tol=1e-10) <= 1

    def test_gamma_positive(self, rng):
        for _ in range(20):
            obs, q, hyper, _ = random_instance(rng, D=6, K=3)
            q2 = update_qAlpha(q, hyper, obs)
            assert np.all(q2.alpha_shape > 0) and np.all(q2.alpha_rate > 0)


class TestTauUpdate:
    def test_perfect_reconstruction_hits_cap(self, rng):
        M = rng.normal(size=(4, 5))
        obs = Observations.from_thetas([M, M, M], [1.0, 1.0, 1.0])
        params = PolicyParams(M, np.zeros((4, 3)), [1.0, 1.0], GroupStructure(((0, 1), (2, 3))),
                              BasisConfig(20, 5))
        hyper = HyperParams()
        q = init_q(params, obs, hyper)
        q = replace(q, W_mean=np.zeros((4, 3)), W_cov=np.zeros_like(q.W_cov))
        q2 = update_qTau(obs, q, hyper)
        shape = hyper.a_tau + 0.5 * 2 * obs.total_weight
        assert shape / hyper.b_tau > hyper.tau_cap
        np.testing.assert_allclose(q2.E_tau, hyper.tau_cap, rtol=1e-14)

    def test_shape_formula(self, rng):
        obs, q, hyper, _ = random_instance(rng, H=7, J=5)
        q2 = update_qTau(obs, q, hyper)
        np.testing.assert_allclose(q2.tau_shape, hyper.a_tau + 2 * 5 * 7 / 2)


class TestBound:
    @pytest.mark.parametrize("seed", range(25))
    def test_every_update_monotone(self, seed):
        rng = np.random.default_rng(seed)
        D = int(rng.integers(2, 7))
        K = int(rng.integers(1, 4))
        obs, q, hyper, _ = random_instance(rng, D=D, K=K, J=int(rng.integers(1, 6)), H=int(rng.integers(2, 8)))
        for sweep in range(3):
            for name in UPDATE_ORDER:
                before = elbo(obs, q, hyper)
                q = coordinate_update(name, obs, q, hyper)
                after = elbo(obs, q, hyper)
                assert after >= before - 1e-8 * abs(before), (name, sweep, before, after)
                q.validate()
                assert np.all(q.E_tau <= hyper.tau_cap * (1 + 1e-12))

    def test_updates_are_stationary(self, rng):
        """Perturbing an updated block never raises the bound."""
        obs, q, hyper, _ = random_instance(rng, D=4, K=2)
        q = update_qM(obs, update_qW(obs, update_qZ(obs, q, hyper), hyper), hyper)
        base = elbo(obs, q, hyper)
        for _ in range(20):
            dM = 1e-4 * rng.normal(size=q.M.shape)
            assert elbo(obs, replace(q, M=q.M + dM), hyper) <= base + 1e-12 * abs(base)

    def test_unknown_update(self, rng):
        obs, q, hyper, _ = random_instance(rng)
        with pytest.raises(ValueError):
            coordinate_update("qX", obs, q, hyper)


class TestFit:
    def test_history_nondecreasing_and_valid(self, rng):
        obs, _, hyper, params = random_instance(rng, D=4, K=3, J=10, H=20)
        res = fit(obs, params, hyper)
        h = np.array(res.elbo)
        assert np.all(np.diff(h) >= -1e-8 * np.abs(h[:-1]))
        res.q.validate()
        assert np.all(res.params.tau <= hyper.tau_cap)
        assert res.params.W.shape == params.W.shape

    def test_collapsed_loadings_restart(self, rng):
        obs, _, hyper, params = random_instance(rng)
        q = init_q(params.replace(W=np.zeros_like(params.W)), obs, hyper)
        assert np.all(np.linalg.norm(q.W_mean, axis=0) > 0)

    def test_rank_must_fit(self, rng):
        obs, _, _, params = random_instance(rng)
        with pytest.raises(ValueError):
            fit(obs, params, HyperParams(K=3, rank=3))

    def test_zero_weight_rejected(self, rng):
        obs, _, hyper, params = random_instance(rng)
        with pytest.raises(ValueError):
            fit(replace(obs, weight=np.zeros_like(obs.weight)), params, hyper)

    def test_subspace_recovery(self):
        """A batch with one planted direction is recovered by the top loading."""
        from groupsps.stubs import subspace_angle_deg
        rng = np.random.default_rng(0)
        gs = GroupStructure(((0, 1), (2, 3)))
        u = rng.normal(size=4)
        u /= np.linalg.norm(u)
        thetas = [np.outer(u, 2.0 * rng.normal(size=10)) + 0.2 * rng.normal(size=(4, 10)) for _ in range(20)]
        obs = Observations.from_thetas(thetas, np.ones(20))
        params = PolicyParams(np.zeros((4, 10)), 0.1 * rng.normal(size=(4, 3)), [1.0, 1.0], gs, BasisConfig(20, 10))
        res = fit(obs, params, HyperParams())
        assert subspace_angle_deg(res.params.W, u) < 5.0


def run_package_fixed_point(Y, col, d, gs, tau, alpha, W0, J, sweeps=20000):
    params = PolicyParams(np.zeros((Y.shape[1], J)), W0, tau, gs, BasisConfig(2 * J, J))
    obs = Observations(Y, col, d, J)
    hyper = HyperParams(K=1, rank=1)
    q = frozen_precisions(init_q(params, obs, hyper), tau, alpha)
    prev = None
    for _ in range(sweeps):
        q = update_qM(obs, update_qW(obs, update_qZ(obs, q, hyper), hyper), hyper)
        cur = np.concatenate([q.W_mean.ravel(), q.M.ravel()])
        if prev is not None and np.max(np.abs(cur - prev)) < 1e-15:
            break
        prev = cur
    return q


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_small_instance_oracle(seed):
    """D=2, K=1, J=2, H=3: package fixed point equals a direct root solve."""
    rng = np.random.default_rng(seed)
    H, J = 3, 2
    u = np.array([np.cos(0.7 + seed), np.sin(0.7 + seed)])
    thetas = [np.outer(u, 1.5 * rng.normal(size=J)) + 0.1 * rng.normal(size=(2, J)) + 0.5 for _ in range(H)]
    d = rng.dirichlet(np.ones(H)) * H
    obs = Observations.from_thetas(thetas, d)
    gs = GroupStructure(((0,), (1,)))
    tau, alpha = np.array([8.0, 5.0]), np.array([[0.5], [0.8]])
    W0 = 0.3 * u[:, None]
    q = run_package_fixed_point(obs.Y, obs.col, obs.weight, gs, tau, alpha, W0, J)
    w, M, mu, s_z, wc = weighted_fa_fixed_point(obs.Y, obs.col, obs.weight, gs.groups, tau, alpha[:, 0],
                                                W0[:, 0], J)
    sign = np.sign(w @ q.W_mean[:, 0])
    assert abs(w[0]) > 1e-3   # non-trivial fixed point
    np.testing.assert_allclose(sign * q.W_mean[:, 0], w, rtol=0, atol=1e-6)
    np.testing.assert_allclose(q.M, M, rtol=0, atol=1e-6)
    np.testing.assert_allclose(sign * q.Z_mean[:, 0], mu, rtol=0, atol=1e-6)
    np.testing.assert_allclose(q.Z_cov[0, 0], s_z, rtol=0, atol=1e-6)
    np.testing.assert_allclose(q.W_cov[:, 0, 0], wc, rtol=0, atol=1e-6)
