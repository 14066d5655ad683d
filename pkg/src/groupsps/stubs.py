"""Cheap analytic environments for testing the learners."""

from __future__ import annotations

import numpy as np

from .policy import BasisConfig


def _mean_theta(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta.mean(0) if theta.ndim == 3 else theta


class ConstantEnv:
    def __init__(self, value: float = 0.0):
        self.value = float(value)
        self.calls = 0

    def evaluate(self, theta, basis: BasisConfig, seed: int) -> float:
        self.calls += 1
        return self.value


class QuadraticEnv:
    """``R(theta) = -||theta - theta*||_F^2``, maximal (zero) at ``theta*``."""

    def __init__(self, target: np.ndarray, offset: float = 0.0):
        self.target = np.asarray(target, dtype=float)
        self.offset = float(offset)
        self.calls = 0

    def evaluate(self, theta, basis: BasisConfig, seed: int) -> float:
        self.calls += 1
        return self.offset - float(np.sum((_mean_theta(theta) - self.target) ** 2))


class PlantedSubspaceEnv:
    """Reward whose profitable deviations all lie along one direction ``u``.

    Per basis column ``a_j = u . theta_j`` is rewarded by
    ``tilt * s_j * a_j + curvature * a_j**2`` and the component orthogonal to
    ``u`` is penalized by ``stiffness`` times its squared norm. Being convex
    along ``u``, the reward keeps favoring spread along ``u``, so a
    reward-weighted fit retains a rank-1 deviation structure there.
    """

    def __init__(self, direction: np.ndarray, signs: np.ndarray, tilt: float = 0.5,
                 curvature: float = 3.0, stiffness: float = 5.0):
        u = np.asarray(direction, dtype=float)
        self.u = u / np.linalg.norm(u)
        self.signs = np.asarray(signs, dtype=float)
        self.tilt = float(tilt)
        self.curvature = float(curvature)
        self.stiffness = float(stiffness)
        self.calls = 0

    def evaluate(self, theta, basis: BasisConfig, seed: int) -> float:
        self.calls += 1
        th = _mean_theta(theta)
        a = self.u @ th
        perp = th - np.outer(self.u, a)
        return float(np.sum(self.tilt * self.signs * a + self.curvature * a ** 2)
                     - self.stiffness * np.sum(perp ** 2))

    @classmethod
    def random(cls, dim: int, J: int, rng: np.random.Generator, block: int = 2,
               **kw) -> "PlantedSubspaceEnv":
        """Random direction with equal weight in every consecutive ``block``
        of coordinates (one action group each), and random tilt signs."""
        u = rng.standard_normal(dim)
        for i in range(0, dim, block):
            u[i:i + block] /= np.linalg.norm(u[i:i + block])
        return cls(u, rng.choice([-1.0, 1.0], J), **kw)


def subspace_angle_deg(W: np.ndarray, planted: np.ndarray, rank: int | None = None) -> float:
    """Largest principal angle between the planted subspace and the top
    ``rank`` left singular directions of ``W`` (rank defaults to the planted
    dimension)."""
    P = np.asarray(planted, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    rank = P.shape[1] if rank is None else rank
    U = np.linalg.svd(np.asarray(W, dtype=float), full_matrices=False)[0][:, :rank]
    Qp = np.linalg.qr(P)[0]
    s = np.linalg.svd(Qp.T @ U, compute_uv=False)
    return float(np.degrees(np.arccos(np.clip(s.min(), -1.0, 1.0))))
