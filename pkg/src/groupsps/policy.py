"""Periodic linear-in-features policies.

Each action dimension is a linear combination of ``J`` phase-shifted sines
that all complete two cycles per episode of ``T`` steps::

    a_i(t) = sum_j (wz_ij + m_ij + e_ij) * sin(2*pi*(2t/T) + 2*pi*(j-1)/J)

with ``wz = W @ Z``. Timesteps are 0-based. Exploration enters through the
latent matrix ``Z`` (standard normal) and the group-wise isotropic noise
``E`` whose precision is shared inside each action group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PER_ROLLOUT = "per_rollout"
PER_TIMESTEP = "per_timestep"
_MODES = (PER_ROLLOUT, PER_TIMESTEP)


@dataclass(frozen=True)
class BasisConfig:
    period_steps: int = 20
    num_basis: int = 10

    def __post_init__(self):
        if int(self.period_steps) != self.period_steps or self.period_steps < 2:
            raise ValueError(f"period_steps must be an integer >= 2, got {self.period_steps}")
        if self.period_steps % 2:
            raise ValueError(f"period_steps must be even, got {self.period_steps}")
        if int(self.num_basis) != self.num_basis or self.num_basis < 1:
            raise ValueError(f"num_basis must be a positive integer, got {self.num_basis}")

    @property
    def T(self) -> int:
        return self.period_steps

    @property
    def J(self) -> int:
        return self.num_basis


@dataclass(frozen=True)
class GroupStructure:
    """Ordered partition of the action indices into groups."""

    groups: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise ValueError("need at least one non-empty group")
        flat = [i for g in groups for i in g]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError(f"groups must partition 0..D-1 exactly, got {groups}")
        labels = tuple(self.labels) or tuple(f"group{m + 1}" for m in range(len(groups)))
        if len(labels) != len(groups):
            raise ValueError("one label per group required")
        object.__setattr__(self, "labels", labels)

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    @property
    def dim(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups])

    @property
    def index(self) -> np.ndarray:
        """Group id of every action dimension."""
        idx = np.empty(self.dim, dtype=np.intp)
        for m, g in enumerate(self.groups):
            idx[list(g)] = m
        return idx

    @classmethod
    def singletons(cls, dim: int) -> "GroupStructure":
        return cls(tuple((i,) for i in range(dim)))


# joint order: left base, right base, left fin, right fin
CRAWLER_GROUPS = GroupStructure(((2, 3), (0, 1)), ("fin", "base"))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PolicyParams:
    M: np.ndarray
    W: np.ndarray
    tau: np.ndarray
    group_structure: GroupStructure = CRAWLER_GROUPS
    basis: BasisConfig = field(default_factory=BasisConfig)

    def __post_init__(self):
        M, W, tau = _frozen(self.M), _frozen(self.W), _frozen(self.tau)
        if W.ndim == 1 and W.size == 0:
            W = _frozen(np.zeros((M.shape[0], 0)))
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "tau", tau)
        D = self.group_structure.dim
        if M.shape != (D, self.basis.J):
            raise ValueError(f"M must be {D}x{self.basis.J}, got {M.shape}")
        if W.ndim != 2 or W.shape[0] != D:
            raise ValueError(f"W must have {D} rows, got {W.shape}")
        if tau.shape != (self.group_structure.num_groups,):
            raise ValueError(f"tau must have one entry per group, got {tau.shape}")
        if not np.all(tau > 0):
            raise ValueError("tau entries must be positive")

    @property
    def D(self) -> int:
        return self.M.shape[0]

    @property
    def K(self) -> int:
        return self.W.shape[1]

    def replace(self, **changes) -> "PolicyParams":
        kw = dict(M=self.M, W=self.W, tau=self.tau,
                  group_structure=self.group_structure, basis=self.basis)
        kw.update(changes)
        return PolicyParams(**kw)

    def to_dict(self) -> dict:
        return {
            "T": self.basis.T,
            "J": self.basis.J,
            "K": self.K,
            "groups": [list(g) for g in self.group_structure.groups],
            "labels": list(self.group_structure.labels),
            "M": self.M.tolist(),
            "W": self.W.tolist(),
            "tau": self.tau.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyParams":
        gs = GroupStructure(tuple(tuple(g) for g in d["groups"]), tuple(d.get("labels", ())))
        W = np.array(d["W"], dtype=float).reshape(gs.dim, int(d["K"]))
        return cls(M=np.array(d["M"], dtype=float), W=W, tau=np.array(d["tau"], dtype=float),
                   group_structure=gs, basis=BasisConfig(int(d["T"]), int(d["J"])))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "PolicyParams":
        return cls.from_dict(json.loads(s))


def initial_params(groups: GroupStructure = CRAWLER_GROUPS, basis: BasisConfig | None = None,
                   K: int = 3, tau: float | Sequence[float] = 1.0, w_scale: float = 0.1,
                   rng: np.random.Generator | None = None) -> PolicyParams:
    """Zero mean policy with a small random projection.

    ``W`` must not start at exactly zero: the latent updates are symmetric
    around ``W = 0`` and would never leave it.
    """
    basis = basis or BasisConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (groups.num_groups,))
    W = w_scale * rng.standard_normal((groups.dim, K))
    return PolicyParams(np.zeros((groups.dim, basis.J)), W, tau, groups, basis)


@dataclass(frozen=True)
class ExplorationDraw:
    Z: np.ndarray
    E: np.ndarray
    mode: str = PER_ROLLOUT

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown exploration mode {self.mode!r}")
        object.__setattr__(self, "Z", _frozen(self.Z))
        object.__setattr__(self, "E", _frozen(self.E))

    @classmethod
    def zeros(cls, params: PolicyParams) -> "ExplorationDraw":
        return cls(np.zeros((params.K, params.basis.J)), np.zeros((params.D, params.basis.J)))


def basis_vector(t, cfg: BasisConfig) -> np.ndarray:
    """Evaluate all ``J`` basis functions at timestep ``t``.

    ``t`` is reduced so that ``t`` and ``t + T/2`` hit bitwise-identical
    phases; non-integer ``t`` evaluates the continuous extension.
    """
    T, J = cfg.T, cfg.J
    cycles = np.mod(2.0 * t, T) / T
    return np.sin(2.0 * np.pi * (cycles + np.arange(J) / J))


def basis_matrix(cfg: BasisConfig) -> np.ndarray:
    """``(T, J)`` table of basis values at every integer timestep."""
    return np.stack([basis_vector(t, cfg) for t in range(cfg.T)])


def sample_exploration(params: PolicyParams, rng: np.random.Generator,
                       mode: str = PER_ROLLOUT) -> ExplorationDraw:
    """Draw ``Z`` then ``E`` from ``rng``.

    Per-timestep mode draws an independent pair for each of the ``T`` steps.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown exploration mode {mode!r}")
    K, D, J = params.K, params.D, params.basis.J
    lead = (params.basis.T,) if mode == PER_TIMESTEP else ()
    Z = rng.standard_normal(lead + (K, J))
    scale = 1.0 / np.sqrt(params.tau)[params.group_structure.index]
    E = rng.standard_normal(lead + (D, J)) * scale[:, None]
    return ExplorationDraw(Z, E, mode)


def realized_theta(params: PolicyParams, draw: ExplorationDraw) -> np.ndarray:
    """``W Z + M + E``: ``(D, J)`` per rollout or ``(T, D, J)`` per timestep."""
    if draw.Z.shape[-2:] != (params.K, params.basis.J) or draw.E.shape[-2:] != params.M.shape:
        raise ValueError(f"draw shapes Z{draw.Z.shape}, E{draw.E.shape} do not match "
                         f"params (D={params.D}, K={params.K}, J={params.basis.J})")
    if draw.mode == PER_TIMESTEP and draw.Z.shape[0] != params.basis.T:
        raise ValueError("per-timestep draw must hold one entry per step")
    return params.W @ draw.Z + params.M + draw.E


def theta_actions(theta: np.ndarray, basis: BasisConfig) -> np.ndarray:
    """Action sequence ``(T, D)`` for a parameter matrix (or one per step)."""
    phi = basis_matrix(basis)
    if theta.ndim == 2:
        return phi @ theta.T
    return np.einsum("tdj,tj->td", theta, phi)


def compute_action(params: PolicyParams, draw: ExplorationDraw, t) -> np.ndarray:
    theta = realized_theta(params, draw)
    if draw.mode == PER_TIMESTEP:
        theta = theta[int(t) % params.basis.T]
    return theta @ basis_vector(t, params.basis)


def mean_action(params: PolicyParams, t) -> np.ndarray:
    return params.M @ basis_vector(t, params.basis)
