"""Run configuration loaded from a versioned JSON document."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .calibration import OptimizerSpec
from .core import DEFAULT_K, DataError
from .models.params import ModelConstants, ModelKind
from .tracking import TRACKER_OPTIMIZER, NoiseModel, TrackerConfig
from .tracking.particles import D_MAX, N_MAX, N_MIN

CONFIG_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    k: int = DEFAULT_K
    recalibrate_every: int = 5
    optimizer: OptimizerSpec = TRACKER_OPTIMIZER
    noise: NoiseModel = NoiseModel()
    n_min: int = N_MIN
    n_max: int = N_MAX
    adaptive: bool = True
    model_constants: ModelConstants = field(default_factory=ModelConstants)
    seed: int = 0
    mode: str = "per-agent"
    forced_model: str | None = None
    d_max: float = D_MAX
    occlusion_factor: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.forced_model is not None:
            object.__setattr__(self, "forced_model", ModelKind.parse(self.forced_model).label)
        self.tracker()  # validates the remaining ranges

    def tracker(self) -> TrackerConfig:
        return TrackerConfig(
            k=self.k, recalibrate_every=self.recalibrate_every, optimizer=self.optimizer, noise=self.noise,
            n_min=self.n_min, n_max=self.n_max, adaptive=self.adaptive, mode=self.mode,
            forced_model=self.forced_model, constants=self.model_constants, d_max=self.d_max,
            occlusion_factor=self.occlusion_factor, seed=self.seed, threads=self.threads)

    def override(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_json(self) -> dict:
        doc = {"version": CONFIG_VERSION}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, OptimizerSpec):
                v = v.to_json()
            elif isinstance(v, (NoiseModel, ModelConstants)):
                v = asdict(v)
            doc[f.name] = v
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        version = doc.pop("version", None)
        if version != CONFIG_VERSION:
            raise ValueError(f"config version must be {CONFIG_VERSION}, got {version!r}")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        if "optimizer" in doc:
            doc["optimizer"] = OptimizerSpec.from_json({**TRACKER_OPTIMIZER.to_json(), **doc["optimizer"]})
        if "noise" in doc:
            doc["noise"] = NoiseModel(**doc["noise"])
        if "model_constants" in doc:
            doc["model_constants"] = ModelConstants.from_json(doc["model_constants"])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from exc
        return cls.from_json(doc)
