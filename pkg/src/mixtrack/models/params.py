from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Mapping

import numpy as np


class ModelKind(enum.IntEnum):
    """Motion models, ordered cheapest first (also the tie-break order)."""

    LIN = 0
    BOIDS = 1
    SOCIAL_FORCES = 2
    RVO = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, name: "str | ModelKind") -> "ModelKind":
        if isinstance(name, ModelKind):
            return name
        key = str(name).strip().lower().replace("-", "_")
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown motion model {name!r}") from None


_LABELS = {ModelKind.LIN: "lin", ModelKind.BOIDS: "boids",
           ModelKind.SOCIAL_FORCES: "socialforces", ModelKind.RVO: "rvo"}
_ALIASES = {
    "lin": ModelKind.LIN, "linear": ModelKind.LIN, "cv": ModelKind.LIN,
    "boids": ModelKind.BOIDS,
    "socialforces": ModelKind.SOCIAL_FORCES, "social_forces": ModelKind.SOCIAL_FORCES,
    "sf": ModelKind.SOCIAL_FORCES, "helbing": ModelKind.SOCIAL_FORCES,
    "rvo": ModelKind.RVO, "orca": ModelKind.RVO,
}

ALL_KINDS = tuple(ModelKind)


@dataclass(frozen=True)
class ParamRange:
    name: str
    lo: float
    hi: float
    mean: float


# (min, max, mean) from the initial optimization ranges
PARAM_TABLE: dict[ModelKind, tuple[ParamRange, ...]] = {
    ModelKind.LIN: (),
    ModelKind.BOIDS: (
        ParamRange("radius", 0.1, 1.0, 0.3),
        ParamRange("comfort_speed", 1.0, 2.0, 1.5),
    ),
    ModelKind.SOCIAL_FORCES: (
        ParamRange("radius", 0.1, 1.0, 0.3),
        ParamRange("comfort_speed", 1.0, 2.0, 1.5),
    ),
    ModelKind.RVO: (
        ParamRange("comfort_speed", 1.0, 2.0, 1.5),
        ParamRange("neighbor_distance", 2.0, 20.0, 11.0),
        ParamRange("radius", 0.2, 0.8, 0.5),
        ParamRange("agent_time_horizon", 0.1, 5.0, 2.0),
        ParamRange("obstacle_time_horizon", 0.1, 5.0, 2.0),
    ),
}

# column of the radius / comfort speed inside each kind's parameter row
RADIUS_COL = {ModelKind.BOIDS: 0, ModelKind.SOCIAL_FORCES: 0, ModelKind.RVO: 2}
SPEED_COL = {ModelKind.BOIDS: 1, ModelKind.SOCIAL_FORCES: 1, ModelKind.RVO: 0}

COMFORT_SPEED_MEAN = 1.4
COMFORT_SPEED_SD = 0.3


def param_names(kind: ModelKind) -> list[str]:
    return [r.name for r in PARAM_TABLE[kind]]


def n_params(kind: ModelKind) -> int:
    return len(PARAM_TABLE[kind])


def table_bounds(kind: ModelKind):
    rows = PARAM_TABLE[kind]
    return (np.array([r.lo for r in rows]), np.array([r.hi for r in rows]),
            np.array([r.mean for r in rows]))


def sample_base(kind: ModelKind, col: int, rng: np.random.Generator, size=None):
    """Draw from a parameter's base distribution.

    Uniform over the range, except comfort speed: normal(1.4, 0.3) truncated
    to the range by rejection.
    """
    r = PARAM_TABLE[kind][col]
    if r.name != "comfort_speed":
        return rng.uniform(r.lo, r.hi, size)
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    filled = 0
    while filled < n:
        draw = rng.normal(COMFORT_SPEED_MEAN, COMFORT_SPEED_SD, 2 * (n - filled) + 4)
        draw = draw[(draw >= r.lo) & (draw <= r.hi)]
        take = min(len(draw), n - filled)
        out[filled:filled + take] = draw[:take]
        filled += take
    return out[0] if size is None else out.reshape(size)


class ModelParams:
    """Per-agent parameter rows for one motion model."""

    def __init__(self, kind: ModelKind, agent_ids: Iterable[int], values=None):
        self.kind = ModelKind.parse(kind)
        self.agent_ids = [int(a) for a in agent_ids]
        p = n_params(self.kind)
        if values is None:
            _, _, mean = table_bounds(self.kind)
            values = np.tile(mean, (len(self.agent_ids), 1))
        self.values = np.asarray(values, dtype=float).reshape(len(self.agent_ids), p)

    @classmethod
    def mean(cls, kind, agent_ids) -> "ModelParams":
        return cls(kind, agent_ids)

    @classmethod
    def from_records(cls, kind, records: Mapping[int, Mapping[str, float]]) -> "ModelParams":
        kind = ModelKind.parse(kind)
        ids = sorted(records)
        names = param_names(kind)
        return cls(kind, ids, [[records[a][n] for n in names] for a in ids])

    def validate(self) -> None:
        if not len(self.agent_ids):
            return
        lo, hi, _ = table_bounds(self.kind)
        bad = np.any((self.values < lo - 1e-12) | (self.values > hi + 1e-12) | ~np.isfinite(self.values), axis=1)
        if bad.any():
            a = self.agent_ids[int(np.flatnonzero(bad)[0])]
            raise ValueError(f"{self.kind.label} parameters for agent {a} outside the allowed ranges: "
                             f"{self.record(a)}")

    def record(self, agent_id: int) -> dict[str, float]:
        i = self.agent_ids.index(int(agent_id))
        return dict(zip(param_names(self.kind), map(float, self.values[i])))

    def records(self) -> dict[int, dict[str, float]]:
        names = param_names(self.kind)
        return {a: dict(zip(names, map(float, row))) for a, row in zip(self.agent_ids, self.values)}

    def rows_for(self, ids: Iterable[int]) -> np.ndarray:
        """Parameter rows in the order of ``ids``; unknown agents get Table means."""
        index = {a: i for i, a in enumerate(self.agent_ids)}
        _, _, mean = table_bounds(self.kind)
        ids = list(ids)
        rows = [self.values[index[a]] if a in index else mean for a in ids]
        return np.array(rows, dtype=float).reshape(len(ids), n_params(self.kind))

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.agent_ids, self.values.copy())

    def __repr__(self):
        return f"ModelParams({self.kind.label}, {len(self.agent_ids)} agents)"


@dataclass(frozen=True)
class ModelConstants:
    """Fixed (non-optimized) constants of the motion models."""

    v_cap: float = 5.0
    # social forces
    relaxation_time: float = 0.5
    repulsion_strength: float = 2.0
    repulsion_range: float = 0.3
    contact_stiffness: float = 50.0
    force_cap: float = 50.0
    social_cutoff: float = 2.0
    # boids
    separation_weight: float = 2.0
    alignment_weight: float = 0.5
    cohesion_weight: float = 0.5
    goal_weight: float = 1.0
    boids_neighborhood: float = 5.0
    boids_lookahead: float = 1.0
    steer_time: float = 0.5
    # rvo
    max_neighbors: int = 10

    def to_array(self) -> np.ndarray:
        return np.array([float(getattr(self, f.name)) for f in fields(self)])

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: Mapping | None) -> "ModelConstants":
        if not doc:
            return cls()
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown model constants {sorted(unknown)}")
        return cls(**doc)


# index of each constant inside ``ModelConstants.to_array()``
C = {f.name: i for i, f in enumerate(fields(ModelConstants))}
DEFAULT_CONSTANTS = ModelConstants()
