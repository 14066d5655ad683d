"""Reward-weighted Bayesian group factor analysis by coordinate ascent.

Observations are the columns of the executed parameter matrices: rollout
``h`` contributes ``J`` vectors ``y = theta_h[:, j]`` in R^D, each carrying
the rollout's reward weight. The generative model is

    y_n = W z_n + M[:, j(n)] + e_n
    z_n ~ N(0, I_K)
    e_n^(m) ~ N(0, tau_m^-1 I)         (isotropic inside group m)
    w_i ~ N(0, diag(alpha_m)^-1)       (row i of W, i in group m)
    alpha_mk ~ Gamma(a_alpha, b_alpha), tau_m ~ Gamma(a_tau, b_tau)

with a flat prior on ``M``. Every observation's local bound is multiplied
by its weight, which keeps ``q(z_n)`` independent of the weight and makes
integer weights equivalent to replicated data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .policy import PER_TIMESTEP, GroupStructure, PolicyParams

log = logging.getLogger(__name__)

_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class HyperParams:
    K: int = 3
    rank: int = 1
    a_tau: float = 1e-3
    b_tau: float = 1e-3
    a_alpha: float = 1e-3
    b_alpha: float = 1e-3
    reward_temperature: float | str = "auto"
    inner_max_iters: int = 100
    inner_rel_tol: float = 1e-6
    tau_cap: float = 1e4
    init_w_var: float = 1e-2

    def __post_init__(self):
        for name in ("a_tau", "b_tau", "a_alpha", "b_alpha", "tau_cap", "init_w_var", "inner_rel_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.K < 0 or self.rank < 0 or self.inner_max_iters < 1:
            raise ValueError("K, rank must be >= 0 and inner_max_iters >= 1")
        if self.reward_temperature != "auto" and not float(self.reward_temperature) > 0:
            raise ValueError("reward_temperature must be positive or 'auto'")

    def check_groups(self, num_groups: int):
        if self.rank > min(num_groups, self.K):
            raise ValueError(f"rank {self.rank} exceeds min(groups={num_groups}, K={self.K})")


@dataclass(frozen=True)
class Observations:
    """Weighted D-dimensional observations with their basis-column index."""

    Y: np.ndarray       # (N, D)
    col: np.ndarray     # (N,) basis column j(n)
    weight: np.ndarray  # (N,)
    J: int

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @classmethod
    def from_thetas(cls, thetas: Sequence[np.ndarray], weights: Sequence[float]) -> "Observations":
        """Stack rollouts; a ``(T, D, J)`` theta splits its weight over the T steps."""
        Ys, cols, ws = [], [], []
        for theta, d in zip(thetas, weights):
            theta = np.asarray(theta, dtype=float)
            if theta.ndim == 2:
                theta, d = theta[None], float(d)
            else:
                d = float(d) / theta.shape[0]
            n_steps, D, J = theta.shape
            Ys.append(theta.transpose(0, 2, 1).reshape(-1, D))
            cols.append(np.tile(np.arange(J), n_steps))
            ws.append(np.full(n_steps * J, d))
        return cls(np.concatenate(Ys), np.concatenate(cols), np.concatenate(ws), J)


@dataclass(frozen=True)
class QPosterior:
    groups: GroupStructure
    M: np.ndarray            # (D, J) point estimate
    W_mean: np.ndarray       # (D, K)
    W_cov: np.ndarray        # (G, K, K) shared by the rows of a group
    Z_mean: np.ndarray       # (N, K)
    Z_cov: np.ndarray        # (K, K) shared by all observations
    alpha_shape: np.ndarray  # (G, K)
    alpha_rate: np.ndarray   # (G, K)
    tau_shape: np.ndarray    # (G,)
    tau_rate: np.ndarray     # (G,)

    @property
    def K(self) -> int:
        return self.W_mean.shape[1]

    @property
    def E_tau(self) -> np.ndarray:
        return self.tau_shape / self.tau_rate

    @property
    def E_log_tau(self) -> np.ndarray:
        return digamma(self.tau_shape) - np.log(self.tau_rate)

    @property
    def E_alpha(self) -> np.ndarray:
        return self.alpha_shape / self.alpha_rate

    @property
    def E_log_alpha(self) -> np.ndarray:
        return digamma(self.alpha_shape) - np.log(self.alpha_rate)

    def E_WtW(self, m: int) -> np.ndarray:
        """E[W^(m)T W^(m)]."""
        Wm = self.W_mean[list(self.groups.groups[m])]
        return Wm.T @ Wm + len(Wm) * self.W_cov[m]

    def validate(self, tol: float = 1e-12) -> None:
        covs = [self.Z_cov, *self.W_cov]
        for c in covs:
            if c.size and (not np.allclose(c, c.T, atol=1e-12) or np.linalg.eigvalsh(c).min() <= tol):
                raise ValueError("covariance is not symmetric positive definite")
        for p in (self.alpha_shape, self.alpha_rate, self.tau_shape, self.tau_rate):
            if not np.all(p > 0):
                raise ValueError("Gamma parameters must be positive")


def _reseed_collapsed(W: np.ndarray, obs: Observations, M: np.ndarray, noise_var: float,
                      rel: float = 1e-3) -> np.ndarray:
    """Replace pruned columns of ``W`` by leading residual directions.

    ``W = 0`` is a fixed point of the latent updates and the bound is flat
    around it, so a column pruned by ARD in one batch would never return.
    Collapsed columns restart on the top eigenvectors of the weighted
    residual covariance with the PPCA amplitude ``sqrt(lambda - noise)``
    (floored so they are never exactly zero).
    """
    K = W.shape[1]
    norms = np.linalg.norm(W, axis=0)
    dead = np.flatnonzero(norms < rel * np.sqrt(noise_var))
    if not dead.size:
        return W
    R = obs.Y - M.T[obs.col]
    C = (R * obs.weight[:, None]).T @ R / obs.total_weight
    lam, vec = np.linalg.eigh(C)
    lam, vec = lam[::-1], vec[:, ::-1]
    W = W.copy()
    floor = 1e-2 * np.sqrt(noise_var)
    for k, col in enumerate(dead[: len(lam)]):
        W[:, col] = vec[:, k] * max(np.sqrt(max(lam[k] - noise_var, 0.0)), floor)
    return W


def init_q(params: PolicyParams, obs: Observations, hyper: HyperParams) -> QPosterior:
    """Warm start from the current policy; Gamma factors at their priors."""
    gs = params.group_structure
    G, K = gs.num_groups, params.K
    W = np.array(params.W, dtype=float)
    if K:
        W = _reseed_collapsed(W, obs, np.asarray(params.M), float(np.mean(1.0 / params.tau)))
    return QPosterior(
        groups=gs,
        M=np.array(params.M, dtype=float),
        W_mean=W,
        W_cov=np.tile(hyper.init_w_var * np.eye(K), (G, 1, 1)),
        Z_mean=np.zeros((len(obs.Y), K)),
        Z_cov=np.eye(K),
        alpha_shape=np.full((G, K), hyper.a_alpha),
        alpha_rate=np.full((G, K), hyper.b_alpha),
        tau_shape=np.full(G, hyper.a_tau),
        tau_rate=np.full(G, hyper.b_tau),
    )


def _residuals(obs: Observations, q: QPosterior) -> np.ndarray:
    return obs.Y - q.M.T[obs.col]


def _spd_inverse(prec: np.ndarray, what: str) -> np.ndarray:
    prec = 0.5 * (prec + prec.T)
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        log.warning("singular %s precision, regularizing by 1e-10*I", what)
        prec = prec + 1e-10 * np.eye(len(prec))
        chol = np.linalg.cholesky(prec)
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


def _second_moment_z(obs: Observations, q: QPosterior) -> np.ndarray:
    """S_z = sum_n d_n (mu_n mu_n^T + Sigma_z)."""
    mu = q.Z_mean
    return (mu * obs.weight[:, None]).T @ mu + obs.total_weight * q.Z_cov


def update_qZ(obs: Observations, q: QPosterior, hyper: HyperParams | None = None) -> QPosterior:
    K = q.K
    E_tau = q.E_tau
    prec = np.eye(K)
    for m in range(q.groups.num_groups):
        prec = prec + E_tau[m] * q.E_WtW(m)
    Z_cov = _spd_inverse(prec, "latent")
    tau_row = E_tau[q.groups.index]
    Z_mean = _residuals(obs, q) @ (tau_row[:, None] * q.W_mean) @ Z_cov
    return replace(q, Z_mean=Z_mean, Z_cov=Z_cov)


def update_qW(obs: Observations, q: QPosterior, hyper: HyperParams | None = None) -> QPosterior:
    S_z = _second_moment_z(obs, q)
    R = _residuals(obs, q)
    cross = (R * obs.weight[:, None]).T @ q.Z_mean  # (D, K): sum_n d_n r_n mu_n^T
    E_tau, E_alpha = q.E_tau, q.E_alpha
    W_mean = np.empty_like(q.W_mean)
    W_cov = np.empty_like(q.W_cov)
    for m, g in enumerate(q.groups.groups):
        cov = _spd_inverse(np.diag(E_alpha[m]) + E_tau[m] * S_z, "loading")
        W_cov[m] = cov
        W_mean[list(g)] = E_tau[m] * cross[list(g)] @ cov
    return replace(q, W_mean=W_mean, W_cov=W_cov)


def update_qM(obs: Observations, q: QPosterior, hyper: HyperParams | None = None) -> QPosterior:
    """Reward-weighted mean of the residual after removing the latent part."""
    target = obs.Y - q.Z_mean @ q.W_mean.T
    num = np.zeros((obs.J, target.shape[1]))
    den = np.zeros(obs.J)
    np.add.at(num, obs.col, target * obs.weight[:, None])
    np.add.at(den, obs.col, obs.weight)
    M = np.array(q.M, dtype=float)
    seen = den > 0
    M[:, seen] = (num[seen] / den[seen, None]).T
    return replace(q, M=M)


def _alpha_bound(q: QPosterior, hyper: HyperParams, shape: np.ndarray, rate: np.ndarray) -> float:
    """Terms of the bound that depend on q(alpha)."""
    sizes = q.groups.sizes
    E_a = shape / rate
    E_log_a = digamma(shape) - np.log(rate)
    w2 = _sum_w2(q)
    val = 0.5 * sizes[:, None] * E_log_a - 0.5 * E_a * w2
    val += _gamma_prior_entropy(shape, rate, hyper.a_alpha, hyper.b_alpha)
    return float(val.sum())


def _sum_w2(q: QPosterior) -> np.ndarray:
    """sum_{i in m} E[w_ik^2] as a (G, K) matrix."""
    out = np.empty((q.groups.num_groups, q.K))
    for m, g in enumerate(q.groups.groups):
        out[m] = (q.W_mean[list(g)] ** 2).sum(0) + len(g) * np.diag(q.W_cov[m])
    return out


def low_rank_log_projection(L: np.ndarray, rank: int) -> np.ndarray:
    """Project onto ``u v^T + row effects + column effects`` with rank(u v^T) <= rank."""
    row = L.mean(1, keepdims=True)
    col = L.mean(0, keepdims=True)
    grand = L.mean()
    C = L - row - col + grand
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    s[rank:] = 0.0
    return (U * s) @ Vt + row + col - grand


def update_qAlpha(q: QPosterior, hyper: HyperParams, obs: Observations | None = None) -> QPosterior:
    """ARD precisions with the rank-r coupling across groups and factors.

    The raw conjugate update is projected in log space. If the projected
    factor lowers the bound below the incoming one, the projection is
    pulled back towards the raw optimum (halving the step) until it does not.
    """
    G, K = q.groups.num_groups, q.K
    if K == 0:
        return q
    shape = np.broadcast_to(hyper.a_alpha + 0.5 * q.groups.sizes[:, None], (G, K)).astype(float)
    rate = hyper.b_alpha + 0.5 * _sum_w2(q)
    if hyper.rank < min(G, K) - 1:
        L_raw = np.log(shape / rate)
        L_proj = low_rank_log_projection(L_raw, hyper.rank)
        before = _alpha_bound(q, hyper, q.alpha_shape, q.alpha_rate)
        step = 1.0
        for _ in range(60):
            cand = shape / np.exp(L_raw + step * (L_proj - L_raw))
            if _alpha_bound(q, hyper, shape, cand) >= before:
                rate = cand
                break
            step *= 0.5
        if step < 1.0:
            log.debug("rank projection damped to step %.3g", step)
    return replace(q, alpha_shape=shape, alpha_rate=rate)


def _tau_quadratic(obs: Observations, q: QPosterior) -> np.ndarray:
    """sum_n d_n E||y_n^(m) - W^(m) z_n - M^(m)_j||^2 for every group."""
    R = _residuals(obs, q)
    S_z = _second_moment_z(obs, q)
    wR = R * obs.weight[:, None]
    out = np.empty(q.groups.num_groups)
    for m, g in enumerate(q.groups.groups):
        g = list(g)
        rr = float((wR[:, g] * R[:, g]).sum())
        cross = float((wR[:, g] * (q.Z_mean @ q.W_mean[g].T)).sum())
        quad = float(np.sum(q.E_WtW(m) * S_z))
        out[m] = rr - 2.0 * cross + quad
    return out


def update_qTau(obs: Observations, q: QPosterior, hyper: HyperParams) -> QPosterior:
    """Group noise precisions; E[tau] is held at or below ``tau_cap``.

    The cap restricts the family to ``shape/rate <= tau_cap``; for fixed
    shape the bound is unimodal in the rate, so the boundary is the
    constrained optimum.
    """
    shape = hyper.a_tau + 0.5 * q.groups.sizes * obs.total_weight
    rate = hyper.b_tau + 0.5 * np.maximum(_tau_quadratic(obs, q), 0.0)
    rate = np.maximum(rate, shape / hyper.tau_cap)
    return replace(q, tau_shape=shape.astype(float), tau_rate=rate)


def _gamma_prior_entropy(shape, rate, a0, b0):
    """E_q[log Gamma(x | a0, b0)] + H[q] for q = Gamma(shape, rate)."""
    E_x = shape / rate
    E_log = digamma(shape) - np.log(rate)
    prior = a0 * np.log(b0) - gammaln(a0) + (a0 - 1.0) * E_log - b0 * E_x
    ent = shape - np.log(rate) + gammaln(shape) + (1.0 - shape) * digamma(shape)
    return prior + ent


def elbo(obs: Observations, q: QPosterior, hyper: HyperParams) -> float:
    """Weighted evidence lower bound (``M`` enters as a point estimate)."""
    gs = q.groups
    sizes = gs.sizes
    K = q.K
    Wsum = obs.total_weight
    D = gs.dim

    quad = _tau_quadratic(obs, q)
    lik = np.sum(0.5 * sizes * Wsum * q.E_log_tau - 0.5 * q.E_tau * quad) - 0.5 * D * Wsum * _LOG2PI

    if K:
        _, logdet_z = np.linalg.slogdet(q.Z_cov)
        zz = float(np.sum(obs.weight * np.sum(q.Z_mean ** 2, 1)))
        latent = -0.5 * (zz + Wsum * np.trace(q.Z_cov)) + 0.5 * Wsum * (logdet_z + K)

        loadings = 0.0
        w2 = _sum_w2(q)
        for m in range(gs.num_groups):
            _, logdet_w = np.linalg.slogdet(q.W_cov[m])
            loadings += sizes[m] * (0.5 * q.E_log_alpha[m].sum() + 0.5 * logdet_w + 0.5 * K)
            loadings -= 0.5 * float(q.E_alpha[m] @ w2[m])
        alpha = float(_gamma_prior_entropy(q.alpha_shape, q.alpha_rate, hyper.a_alpha, hyper.b_alpha).sum())
    else:
        latent = loadings = alpha = 0.0

    tau = float(_gamma_prior_entropy(q.tau_shape, q.tau_rate, hyper.a_tau, hyper.b_tau).sum())
    return float(lik + latent + loadings + alpha + tau)


UPDATE_ORDER = ("qZ", "qW", "qM", "qAlpha", "qTau")


def coordinate_update(name: str, obs: Observations, q: QPosterior, hyper: HyperParams) -> QPosterior:
    if name == "qZ":
        return update_qZ(obs, q, hyper)
    if name == "qW":
        return update_qW(obs, q, hyper)
    if name == "qM":
        return update_qM(obs, q, hyper)
    if name == "qAlpha":
        return update_qAlpha(q, hyper, obs)
    if name == "qTau":
        return update_qTau(obs, q, hyper)
    raise ValueError(f"unknown update {name!r}")


@dataclass
class FitResult:
    params: PolicyParams
    q: QPosterior
    elbo: list[float] = field(default_factory=list)
    converged: bool = True


def fit(obs: Observations, params: PolicyParams, hyper: HyperParams,
        q: QPosterior | None = None) -> FitResult:
    """Run full sweeps until the relative bound change drops below tolerance.

    Returns the expectations of the best iterate as the next policy.
    """
    if obs.total_weight <= 0:
        raise ValueError("batch carries no weight")
    hyper.check_groups(params.group_structure.num_groups)
    q = q if q is not None else init_q(params, obs, hyper)
    history = []
    best_q, best = q, -np.inf
    prev = None
    converged = False
    for _ in range(hyper.inner_max_iters):
        for name in UPDATE_ORDER:
            q = coordinate_update(name, obs, q, hyper)
        cur = elbo(obs, q, hyper)
        history.append(cur)
        if cur >= best:
            best_q, best = q, cur
        if prev is not None and abs(cur - prev) <= hyper.inner_rel_tol * abs(prev):
            converged = True
            break
        prev = cur
    if not converged:
        log.info("inner loop stopped after %d sweeps without converging", hyper.inner_max_iters)
    new = params.replace(M=best_q.M, W=best_q.W_mean, tau=np.minimum(best_q.E_tau, hyper.tau_cap))
    return FitResult(new, best_q, history, converged)
