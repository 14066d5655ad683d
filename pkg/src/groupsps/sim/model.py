"""Crawler model: media and fin presets, calibration, stepping and rollouts.

Per limb the fin tip sits ``h = L * max(0, sin(base)) * cos(fin)`` below
the surface and produces traction proportional to that depth times the
backward sweep of the tip since the previous step. Dense media resist
penetration: the depth follows a deeper target only by a fraction
``sinkage_rate`` per step, while withdrawal is immediate. The summed
traction minus body drag, itself relieved as the fins lift the body,
moves the body forward; a traction imbalance turns it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..policy import BasisConfig, theta_actions
from . import _kernel_py as _k
from .backend import simulate

JOINT_NAMES = ("left_base", "right_base", "left_fin", "right_fin")
JOINT_LIMIT = 0.5 * math.pi

# measured substrate properties; the remaining coefficients are calibration data
_MEDIA_PROPERTIES = {
    "poppy": dict(density=0.54, heterogeneity=0.02, moisture=0.0),
    "sand_day1": dict(density=1.46, heterogeneity=0.15, moisture=0.0159),
    "sand_day2": dict(density=1.46, heterogeneity=0.15, moisture=0.0087),
}
MEDIA_NAMES = tuple(_MEDIA_PROPERTIES)
FIN_LABELS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class FinShape:
    label: str
    area: float                 # cm^2
    curvature_factor: float = 1.0
    stiffness: float = 1.0

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError(f"fin {self.label}: area must be positive")
        if not self.curvature_factor >= 1:
            raise ValueError(f"fin {self.label}: curvature_factor must be >= 1")
        if not 0 < self.stiffness <= 1:
            raise ValueError(f"fin {self.label}: stiffness must lie in (0, 1]")


@dataclass(frozen=True)
class MediaParams:
    name: str
    density: float              # g/ml
    heterogeneity: float        # std of multiplicative traction noise
    moisture: float             # mass fraction
    traction_coeff: float
    body_drag_coeff: float
    slip: float = 0.0
    sinkage_rate: float = 1.0   # fraction of a deeper target reached per step

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError(f"media {self.name}: density must be positive")
        if not self.heterogeneity >= 0:
            raise ValueError(f"media {self.name}: heterogeneity must be >= 0")
        if not 0 <= self.moisture < 1:
            raise ValueError(f"media {self.name}: moisture must lie in [0, 1)")
        if not 0 <= self.slip < 1:
            raise ValueError(f"media {self.name}: slip must lie in [0, 1)")
        if not (self.traction_coeff >= 0 and self.body_drag_coeff >= 0):
            raise ValueError(f"media {self.name}: coefficients must be >= 0")
        if not 0 < self.sinkage_rate <= 1:
            raise ValueError(f"media {self.name}: sinkage_rate must lie in (0, 1]")

    @property
    def body_resistance(self) -> float:
        return self.body_drag_coeff * self.density * (1.0 + 5.0 * self.moisture)


@dataclass(frozen=True)
class ModelConstants:
    limb_length_cm: float = 10.0
    lift_gain: float = 1.0
    yaw_gain: float = 0.02
    normalizer: float = 1.0

    def __post_init__(self):
        if not (self.limb_length_cm > 0 and self.normalizer > 0):
            raise ValueError("limb length and normalizer must be positive")
        if not self.lift_gain >= 0:
            raise ValueError("lift_gain must be >= 0")


@dataclass(frozen=True)
class Calibration:
    constants: ModelConstants
    media: dict
    fins: dict
    traction_coeff: float
    body_drag_coeff: float
    content_hash: str = ""
    source: str = ""


def git_blob_hash(data: bytes) -> str:
    """Content hash in the form ``git hash-object`` prints."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def default_calibration_bytes() -> bytes:
    return resources.files("groupsps.sim").joinpath("data/calibration.json").read_bytes()


def load_calibration(path: str | Path | None = None) -> Calibration:
    """Parse a calibration JSON file (the shipped default when ``path`` is None)."""
    if path is None:
        raw, source = default_calibration_bytes(), "default"
    else:
        raw, source = Path(path).read_bytes(), str(path)
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{source}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        consts = ModelConstants(limb_length_cm=float(doc["limb_length_cm"]), **doc.get("model", {}))
        cal = Calibration(consts, dict(doc["media"]), dict(doc["fins"]), float(doc["traction_coeff"]),
                          float(doc["body_drag_coeff"]), git_blob_hash(raw), source)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{source}: malformed calibration ({exc})") from exc
    return cal


_DEFAULT: Calibration | None = None


def _calibration(cal: Calibration | None) -> Calibration:
    global _DEFAULT
    if cal is not None:
        return cal
    if _DEFAULT is None:
        _DEFAULT = load_calibration()
    return _DEFAULT


def preset_media(name: str, calibration: Calibration | None = None) -> MediaParams:
    """Substrate preset; density, heterogeneity and moisture are fixed, the
    rest comes from the calibration."""
    if name not in _MEDIA_PROPERTIES:
        raise ValueError(f"unknown media preset {name!r}; expected one of {MEDIA_NAMES}")
    cal = _calibration(calibration)
    extra = {"traction_coeff": cal.traction_coeff, "body_drag_coeff": cal.body_drag_coeff}
    extra.update(cal.media.get(name, {}))
    return MediaParams(name=name, **_MEDIA_PROPERTIES[name], **extra)


def preset_fin(label: str, calibration: Calibration | None = None) -> FinShape:
    cal = _calibration(calibration)
    if label not in cal.fins:
        raise ValueError(f"unknown fin {label!r}; calibration defines {sorted(cal.fins)}")
    return FinShape(label=label, **cal.fins[label])


@dataclass(frozen=True)
class CrawlerState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    joint_angles: tuple = (0.0, 0.0, 0.0, 0.0)
    depths: tuple = (0.0, 0.0)
    step_index: int = 0

    def to_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, *self.joint_angles, *self.depths])

    @classmethod
    def from_vector(cls, v, step_index: int) -> "CrawlerState":
        v = [float(a) for a in v[:_k.STATE_SIZE]]
        return cls(v[0], v[1], v[2], tuple(v[3:7]), tuple(v[7:9]), step_index)


@dataclass(frozen=True)
class StepResult:
    new_state: CrawlerState
    displacement: float         # cm along the body axis
    lateral: float              # cm
    traction_left: float
    traction_right: float


def kernel_params(media: MediaParams, fin: FinShape, constants: ModelConstants) -> np.ndarray:
    p = np.empty(_k.NUM_PARAMS)
    p[_k.P_LIMB] = constants.limb_length_cm
    p[_k.P_GAIN] = (media.traction_coeff * media.density * fin.area * fin.stiffness
                    * fin.curvature_factor * (1.0 - media.slip))
    p[_k.P_HET] = media.heterogeneity
    p[_k.P_DRAG] = media.body_resistance
    p[_k.P_LIFT] = constants.lift_gain
    p[_k.P_NORM] = constants.normalizer
    p[_k.P_YAW] = constants.yaw_gain
    p[_k.P_SINK] = media.sinkage_rate
    return p


def _check_models(media, fin):
    if not isinstance(media, MediaParams):
        raise TypeError(f"expected MediaParams, got {type(media).__name__}")
    if not isinstance(fin, FinShape):
        raise TypeError(f"expected FinShape, got {type(fin).__name__}")


def _check_actions(actions) -> np.ndarray:
    a = np.ascontiguousarray(actions, dtype=float)
    if a.ndim != 2 or a.shape[1] != 4:
        raise ValueError(f"actions must have shape (T, 4), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("actions must be finite")
    return a


def reset(media: MediaParams, fin: FinShape, seed: int | None = None) -> CrawlerState:
    """Canonical start state. Media noise is reseeded by the caller's
    generator (see :class:`CrawlerSim`); the pose is always the origin."""
    _check_models(media, fin)
    return CrawlerState()


def step(state: CrawlerState, action, media: MediaParams, fin: FinShape,
         rng: np.random.Generator, constants: ModelConstants | None = None) -> StepResult:
    """One quasi-static step; the joints reach their (clamped) targets."""
    _check_models(media, fin)
    constants = constants or _calibration(None).constants
    a = _check_actions(np.reshape(action, (1, 4)))
    noise = rng.standard_normal((1, 2))
    out = simulate(a, noise, state.to_vector(), kernel_params(media, fin, constants))[0]
    return StepResult(CrawlerState.from_vector(out, state.step_index + 1),
                      float(out[11]), float(out[12]), float(out[9]), float(out[10]))


@dataclass
class Trajectory:
    rows: np.ndarray            # (T, 13) kernel output

    @property
    def reward(self) -> float:
        """Final displacement along the initial heading."""
        return float(self.rows[-1, 0]) if len(self.rows) else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "x", "y", "heading", *JOINT_NAMES, "traction_l", "traction_r"])
        for t, r in enumerate(self.rows, start=1):
            w.writerow([t] + [repr(float(v)) for v in (*r[0:7], r[9], r[10])])
        return buf.getvalue()


def simulate_rollout(media: MediaParams, fin: FinShape, actions, seed: int,
                     constants: ModelConstants | None = None) -> Trajectory:
    """Run an action sequence from the reset state with noise seeded by ``seed``.

    Noise is drawn as ``(T, 2)`` standard normals in one call, which yields
    the same stream as ``T`` successive :func:`step` calls.
    """
    _check_models(media, fin)
    constants = constants or _calibration(None).constants
    a = _check_actions(actions)
    if a.shape[0] < 1:
        raise ValueError("need at least one step")
    noise = np.random.default_rng(seed).standard_normal((a.shape[0], 2))
    start = reset(media, fin, seed).to_vector()
    return Trajectory(simulate(a, noise, start, kernel_params(media, fin, constants)))


def rollout(media: MediaParams, fin: FinShape, actions, seed: int,
            constants: ModelConstants | None = None) -> float:
    """Forward displacement (cm) of one episode."""
    return simulate_rollout(media, fin, actions, seed, constants).reward


class CrawlerSim:
    """Stateful wrapper owning its generator, for step-by-step use."""

    def __init__(self, media: MediaParams, fin: FinShape, constants: ModelConstants | None = None):
        _check_models(media, fin)
        self.media, self.fin = media, fin
        self.constants = constants or _calibration(None).constants
        self.reset(0)

    def reset(self, seed: int) -> CrawlerState:
        self.rng = np.random.default_rng(seed)
        self.state = reset(self.media, self.fin, seed)
        return self.state

    def step(self, action) -> StepResult:
        res = step(self.state, action, self.media, self.fin, self.rng, self.constants)
        self.state = res.new_state
        return res


@dataclass
class CrawlerEnv:
    """Rollout evaluator for the learners: parameters in, displacement out."""

    media: MediaParams
    fin: FinShape
    constants: ModelConstants = field(default_factory=lambda: _calibration(None).constants)
    calls: int = 0

    @classmethod
    def from_presets(cls, media: str, fin: str, calibration: Calibration | None = None,
                     **media_overrides) -> "CrawlerEnv":
        cal = _calibration(calibration)
        m = replace(preset_media(media, cal), **media_overrides)
        return cls(m, preset_fin(fin, cal), cal.constants)

    def actions(self, theta, basis: BasisConfig) -> np.ndarray:
        return theta_actions(np.asarray(theta, dtype=float), basis)

    def evaluate(self, theta, basis: BasisConfig, seed: int) -> float:
        self.calls += 1
        return rollout(self.media, self.fin, self.actions(theta, basis), seed, self.constants)

    def trajectory(self, theta, basis: BasisConfig, seed: int) -> Trajectory:
        return simulate_rollout(self.media, self.fin, self.actions(theta, basis), seed, self.constants)

    def describe(self) -> dict:
        return {"media": asdict(self.media), "fin": asdict(self.fin), "constants": asdict(self.constants)}
