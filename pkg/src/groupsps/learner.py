"""Group Factor Policy Search outer loop.

Each iteration samples ``H`` exploratory rollouts around the current
policy, turns their rewards into normalized weights, refits the policy
distribution by reward-weighted variational inference and finally executes
the new mean policy once, i.e. ``H + 1`` executions per iteration.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from .policy import (PER_ROLLOUT, BasisConfig, ExplorationDraw, PolicyParams,
                     realized_theta, sample_exploration)
from .seeding import derive_seed
from .variational import HyperParams, Observations, fit

log = logging.getLogger(__name__)

MAX_RETRIES = 20
# spawn-key tags below an iteration
_EXPLORE, _MEAN = 0, 1


class Environment(Protocol):
    def evaluate(self, theta: np.ndarray, basis: BasisConfig, seed: int) -> float:
        """Reward of one execution of parameter matrix ``theta``."""


class RolloutError(RuntimeError):
    """An environment could not produce a valid rollout."""


def reward_to_weights(rewards, beta: float) -> np.ndarray:
    """Softmax weights scaled to sum to ``H``."""
    R = np.asarray(rewards, dtype=float)
    if R.ndim != 1 or R.size == 0:
        raise ValueError("need a non-empty reward vector")
    if not np.all(np.isfinite(R)):
        raise ValueError("rewards must be finite")
    if not beta > 0:
        raise ValueError("beta must be positive")
    e = np.exp(beta * (R - R.max()))
    return R.size * e / e.sum()


def effective_sample_size(weights) -> float:
    d = np.asarray(weights, dtype=float)
    return float(d.sum() ** 2 / np.sum(d * d))


class Temperature(NamedTuple):
    beta: float
    ess: float
    saturated: bool = False
    uniform: bool = False


def auto_temperature(rewards, target_fraction: float = 0.5, rel_tol: float = 0.005,
                     max_iter: int = 200) -> Temperature:
    """Pick ``beta`` so the weights' effective sample size is ``H/2``.

    Bisection runs in log space on ``beta * std(rewards)`` over
    ``[1e-6, 1e6]``. When the target lies beyond the bracket (too few
    distinct rewards) the upper end is returned flagged as saturated.
    """
    R = np.asarray(rewards, dtype=float)
    H = R.size
    if not np.all(np.isfinite(R)):
        raise ValueError("rewards must be finite")
    if H < 2 or np.all(R == R[0]):
        return Temperature(1.0, float(H), uniform=True)
    scale = R.std()
    target = target_fraction * H

    def ess(log_x):
        return effective_sample_size(reward_to_weights(R, math.exp(log_x) / scale))

    lo, hi = math.log(1e-6), math.log(1e6)
    if ess(hi) >= target * (1.0 - rel_tol):
        b = math.exp(hi) / scale
        return Temperature(b, ess(hi), saturated=True)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = ess(mid)
        if abs(e - target) <= rel_tol * H:
            break
        if e > target:
            lo = mid
        else:
            hi = mid
    return Temperature(math.exp(mid) / scale, e)


@dataclass(frozen=True)
class RolloutRecord:
    draw: ExplorationDraw
    theta: np.ndarray
    reward: float
    seed: int
    weight: float = float("nan")


def collect_batch(env: Environment, params: PolicyParams, H: int, session_seed: int,
                  iteration: int, mode: str = PER_ROLLOUT) -> tuple[list[RolloutRecord], int]:
    """Execute ``H`` exploratory rollouts; returns the records and the retry count.

    Rollout ``h`` draws from the stream keyed ``(iteration, 0, h, attempt)``;
    failed or non-finite rollouts are re-drawn with the next attempt index.
    """
    if H < 2:
        raise ValueError("H must be at least 2")
    records, retries = [], 0
    for h in range(H):
        for attempt in range(MAX_RETRIES):
            seed = derive_seed(session_seed, iteration, _EXPLORE, h, attempt)
            draw = sample_exploration(params, np.random.default_rng(derive_seed(seed, 0)), mode)
            theta = realized_theta(params, draw)
            try:
                reward = float(env.evaluate(theta, params.basis, derive_seed(seed, 1)))
            except (RolloutError, FloatingPointError, ValueError) as exc:
                log.warning("rollout %d attempt %d failed: %s", h, attempt, exc)
                retries += 1
                continue
            if not math.isfinite(reward):
                log.warning("rollout %d attempt %d returned %r", h, attempt, reward)
                retries += 1
                continue
            records.append(RolloutRecord(draw, theta, reward, seed))
            break
        else:
            raise RolloutError(f"rollout {h} of iteration {iteration} failed {MAX_RETRIES} times")
    if retries:
        log.info("iteration %d: %d rollouts re-drawn", iteration, retries)
    return records, retries


def mean_policy_seed(session_seed: int, iteration: int) -> int:
    return derive_seed(session_seed, iteration, _MEAN)


@dataclass
class IterationRecord:
    iteration: int
    mean_policy_reward: float
    batch_rewards: list[float]
    elbo: list[float]
    e_tau: list[float]
    e_alpha: list[list[float]]
    ess: float
    beta: float
    params: dict
    rollout_seeds: list[int]
    mean_seed: int
    retries: int = 0
    converged: bool = True

    @property
    def executions(self) -> int:
        return len(self.batch_rewards) + self.retries + 1

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class LearningTrace:
    session_seed: int
    initial_params: dict
    records: list[IterationRecord] = field(default_factory=list)
    method: str = "groups"
    num_groups: int = 0
    initial_reward: float | None = None

    @property
    def executions(self) -> int:
        return sum(r.executions for r in self.records)

    def mean_rewards(self) -> np.ndarray:
        return np.array([r.mean_policy_reward for r in self.records])

    def final_params(self) -> PolicyParams:
        d = self.records[-1].params if self.records else self.initial_params
        return PolicyParams.from_dict(d)

    def to_jsonl(self) -> str:
        head = {"kind": "header", "method": self.method, "session_seed": self.session_seed,
                "initial_params": self.initial_params, "initial_reward": self.initial_reward}
        lines = [json.dumps(head)]
        lines += [json.dumps({"kind": "iteration", **r.to_dict()}) for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "LearningTrace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("kind") != "header":
            raise ValueError("trace is missing its header line")
        head = rows[0]
        recs = []
        for r in rows[1:]:
            r = dict(r)
            r.pop("kind")
            recs.append(IterationRecord(**r))
        init = head["initial_params"]
        return cls(head["session_seed"], init, recs, head["method"], len(init["tau"]),
                   head.get("initial_reward"))

    def csv_header(self) -> list[str]:
        G = self.num_groups or len(self.initial_params["tau"])
        return (["iteration", "mean_policy_reward", "batch_reward_mean", "batch_reward_max", "elbo_final"]
                + [f"e_tau_group{m + 1}" for m in range(G)] + ["ess"])

    def to_csv(self, reward_scale: float = 1.0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        for r in self.records:
            b = np.asarray(r.batch_rewards, dtype=float) * reward_scale
            row = [r.iteration, r.mean_policy_reward * reward_scale,
                   float(b.mean()) if b.size else "", float(b.max()) if b.size else "",
                   r.elbo[-1] if r.elbo else ""]
            w.writerow([_fmt(x) for x in row + list(r.e_tau) + [r.ess]])
        return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


@dataclass(frozen=True)
class LearnConfig:
    iterations: int = 10
    H: int = 20
    hyper: HyperParams = field(default_factory=HyperParams)
    mode: str = PER_ROLLOUT


def weights_for(rewards: Sequence[float], hyper: HyperParams) -> tuple[np.ndarray, Temperature]:
    if hyper.reward_temperature == "auto":
        temp = auto_temperature(rewards)
    else:
        temp = Temperature(float(hyper.reward_temperature), float("nan"))
    d = reward_to_weights(rewards, temp.beta)
    return d, temp._replace(ess=effective_sample_size(d))


def learn(env: Environment, init: PolicyParams, config: LearnConfig, session_seed: int) -> LearningTrace:
    """Run ``config.iterations`` rounds of collect / weight / fit / evaluate.

    With zero iterations only the initial mean policy is evaluated (stored
    as ``initial_reward``); otherwise iterations are numbered from 1 and
    each ends with one execution of the freshly fitted mean policy.
    """
    if config.iterations < 0:
        raise ValueError("iterations must be >= 0")
    trace = LearningTrace(session_seed, init.to_dict(), num_groups=init.group_structure.num_groups)
    if config.iterations == 0:
        trace.initial_reward = float(env.evaluate(init.M, init.basis, mean_policy_seed(session_seed, 0)))
        return trace
    params = init
    for it in range(1, config.iterations + 1):
        try:
            batch, retries = collect_batch(env, params, config.H, session_seed, it, config.mode)
            d, temp = weights_for([r.reward for r in batch], config.hyper)
            obs = Observations.from_thetas([r.theta for r in batch], d)
            result = fit(obs, params, config.hyper)
            params = result.params
            mseed = mean_policy_seed(session_seed, it)
            mean_reward = float(env.evaluate(params.M, params.basis, mseed))
        except Exception as exc:
            raise RuntimeError(f"iteration {it} of session {session_seed} failed: {exc}") from exc
        trace.records.append(IterationRecord(
            iteration=it,
            mean_policy_reward=mean_reward,
            batch_rewards=[r.reward for r in batch],
            elbo=[float(x) for x in result.elbo],
            e_tau=[float(x) for x in params.tau],
            e_alpha=result.q.E_alpha.tolist(),
            ess=temp.ess,
            beta=float(temp.beta),
            params=params.to_dict(),
            rollout_seeds=[r.seed for r in batch],
            mean_seed=mseed,
            retries=retries,
            converged=result.converged,
        ))
        log.debug("iteration %d: mean reward %.4g, ESS %.2f", it, mean_reward, temp.ess)
    return trace
