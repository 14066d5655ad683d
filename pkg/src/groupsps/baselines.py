"""Reference optimizers sharing the learner's budget and trace format.

* random search: isotropic proposals around the best parameters so far;
* diagonal Gaussian search: reward-weighted mean and per-dimension variance,
  i.e. the group-factor learner stripped of its latent space.

Both spend ``H + 1`` executions per iteration like the main learner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .learner import (_EXPLORE, Environment, IterationRecord, LearningTrace,
                      mean_policy_seed, weights_for)
from .policy import GroupStructure, PolicyParams
from .seeding import derive_seed
from .variational import HyperParams


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "diagonal_gaussian"
    iterations: int = 10
    H: int = 20
    sigma: float = 1.0                 # random search proposal std
    init_var: float = 1.0              # diagonal search starting variance
    hyper: HyperParams = field(default_factory=lambda: HyperParams(K=0, rank=0))

    def __post_init__(self):
        if self.method not in ("random_search", "diagonal_gaussian"):
            raise ValueError(f"unknown baseline {self.method!r}")
        if self.sigma < 0 or not self.init_var > 0:
            raise ValueError("sigma must be >= 0 and init_var > 0")


def _as_params(init, basis=None) -> PolicyParams:
    if isinstance(init, PolicyParams):
        return init
    M = np.asarray(init, dtype=float)
    from .policy import BasisConfig
    basis = basis or BasisConfig(20, M.shape[1])
    gs = GroupStructure.singletons(M.shape[0])
    return PolicyParams(M, np.zeros((M.shape[0], 0)), np.ones(M.shape[0]), gs, basis)


def random_search(env: Environment, init, config: BaselineConfig, session_seed: int) -> LearningTrace:
    """Propose ``M + sigma * G`` per rollout and keep the best parameters seen."""
    params = _as_params(init)
    D, J = params.M.shape
    G = params.group_structure.num_groups
    trace = LearningTrace(session_seed, params.to_dict(), method="random_search", num_groups=G)
    best_M, best_R = np.array(params.M), -np.inf
    prec = [1.0 / config.sigma ** 2 if config.sigma > 0 else float("inf")] * G
    for it in range(1, config.iterations + 1):
        rewards, seeds = [], []
        for h in range(config.H):
            seed = derive_seed(session_seed, it, _EXPLORE, h, 0)
            noise = np.random.default_rng(derive_seed(seed, 0)).standard_normal((D, J))
            theta = best_M + config.sigma * noise
            R = float(env.evaluate(theta, params.basis, derive_seed(seed, 1)))
            rewards.append(R)
            seeds.append(seed)
            if R > best_R:
                best_M, best_R = theta, R
        mseed = mean_policy_seed(session_seed, it)
        mean_R = float(env.evaluate(best_M, params.basis, mseed))
        pd = params.replace(M=best_M).to_dict()
        trace.records.append(IterationRecord(it, mean_R, rewards, [], prec, [], float("nan"),
                                             float("nan"), pd, seeds, mseed))
    return trace


def diagonal_update(thetas: np.ndarray, weights: np.ndarray, hyper: HyperParams):
    """Weighted mean per entry and weighted precision per action dimension.

    The precision carries the same Gamma smoothing and cap as the group
    learner's noise update so that the two coincide for ``K = 0``.
    """
    thetas = np.asarray(thetas, dtype=float)   # (H, D, J)
    d = np.asarray(weights, dtype=float)
    M = np.tensordot(d, thetas, axes=1) / d.sum()
    resid2 = np.tensordot(d, (thetas - M) ** 2, axes=1).sum(1)  # (D,)
    J = thetas.shape[2]
    shape = hyper.a_tau + 0.5 * d.sum() * J
    rate = np.maximum(hyper.b_tau + 0.5 * resid2, shape / hyper.tau_cap)
    return M, shape / rate


def diagonal_gaussian_ps(env: Environment, init, config: BaselineConfig, session_seed: int) -> LearningTrace:
    """Reward-weighted search over ``M`` with independent per-dimension noise."""
    params = _as_params(init)
    D, J = params.M.shape
    gs = GroupStructure.singletons(D)
    prec = np.full(D, 1.0 / config.init_var)
    if isinstance(init, PolicyParams) and init.K == 0 and init.group_structure == gs:
        prec = np.array(init.tau, dtype=float)
    params = PolicyParams(params.M, np.zeros((D, 0)), prec, gs, params.basis)
    trace = LearningTrace(session_seed, params.to_dict(), method="diagonal_gaussian", num_groups=D)
    M = np.array(params.M)
    for it in range(1, config.iterations + 1):
        thetas, rewards, seeds = [], [], []
        for h in range(config.H):
            seed = derive_seed(session_seed, it, _EXPLORE, h, 0)
            rng = np.random.default_rng(derive_seed(seed, 0))
            theta = M + rng.standard_normal((D, J)) * (1.0 / np.sqrt(prec))[:, None]
            rewards.append(float(env.evaluate(theta, params.basis, derive_seed(seed, 1))))
            thetas.append(theta)
            seeds.append(seed)
        d, temp = weights_for(rewards, config.hyper)
        M, prec = diagonal_update(np.array(thetas), d, config.hyper)
        mseed = mean_policy_seed(session_seed, it)
        mean_R = float(env.evaluate(M, params.basis, mseed))
        pd = params.replace(M=M, tau=prec).to_dict()
        trace.records.append(IterationRecord(it, mean_R, rewards, [], prec.tolist(), [], temp.ess,
                                             float(temp.beta), pd, seeds, mseed))
    return trace
