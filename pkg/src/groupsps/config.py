"""Experiment configuration: JSON files checked against a shipped schema."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import jsonschema

from .policy import PER_ROLLOUT, BasisConfig
from .variational import HyperParams


class ConfigError(ValueError):
    """Configuration could not be read or does not satisfy the schema."""


def _data(name: str) -> str:
    return resources.files("groupsps").joinpath("data", name).read_text()


def schema() -> dict:
    return json.loads(_data("config.schema.json"))


def default_config_path(name: str = "fin_study") -> Path:
    return Path(str(resources.files("groupsps").joinpath("data", f"{name}.json")))


@dataclass(frozen=True)
class SyntheticConfig:
    seeds: int = 20
    quadratic_dim: int = 4
    quadratic_scale: float = 1.0
    planted_dim: int = 4
    random_search_sigma: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "fin_study"
    fins: tuple = ("A", "B", "C", "D")
    media: tuple = ("poppy",)
    sessions: int = 5
    iterations: int = 10
    H: int = 20
    T: int = 20
    J: int = 10
    K: int = 3
    rank: int = 1
    init_tau: float = 4.0
    init_w_scale: float = 0.1
    exploration: str = PER_ROLLOUT
    reward_temperature: object = "auto"
    heterogeneity: float | None = None   # overrides the media preset when set
    master_seed: int = 0
    output_dir: str = "runs"
    calibration_path: str | None = None
    reward_scale: float = 1.0
    reward_unit: str = "cm"
    n_eval: int = 5
    source_dir: str | None = None
    workers: int = 1
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self):
        if self.experiment != "synthetic" and not self.fins:
            raise ConfigError("fins must be non-empty for robot experiments")
        if self.experiment == "transfer" and len(self.media) != 2:
            raise ConfigError("transfer needs media [source, target]")
        if self.rank > self.K:
            raise ConfigError("rank cannot exceed K")

    @property
    def basis(self) -> BasisConfig:
        return BasisConfig(self.T, self.J)

    @property
    def hyper(self) -> HyperParams:
        return HyperParams(K=self.K, rank=self.rank, reward_temperature=self.reward_temperature)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fins"], d["media"] = list(self.fins), list(self.media)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        kw = dict(doc)
        if "fins" in kw:
            kw["fins"] = tuple(kw["fins"])
        if "media" in kw:
            kw["media"] = tuple(kw["media"])
        if "synthetic" in kw:
            kw["synthetic"] = SyntheticConfig(**kw["synthetic"])
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in kw.items() if k in known})


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be an object")
    try:
        return ExperimentConfig.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))
