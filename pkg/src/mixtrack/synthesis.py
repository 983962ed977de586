"""Synthetic ground truth: templated crowd scenarios stepped by a chosen
motion model, plus observation corruption (noise and dropout)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .core import AgentState, DataError, Scenario, TrajectoryDataset, arrays_to_states, dataset_from_states
from .models import step_arrays
from .models.params import (
    COMFORT_SPEED_MEAN, DEFAULT_CONSTANTS, RADIUS_COL, SPEED_COL, ModelConstants, ModelKind, ModelParams,
    table_bounds,
)

TEMPLATE_KINDS = ("crossing", "head_on_corridor", "circle_swap", "random_goals")
DENSITY = {"low": 0.3, "medium": 1.0, "high": 2.5}  # agents per square meter at the start
# largest radius that still lets random placement succeed at each density
RADIUS_CAP = {"low": 0.8, "medium": 0.3, "high": 0.2}
DEFAULT_FRAMES = 200
DEFAULT_DT = 1.0 / 25.0
PLACEMENT_ATTEMPTS = 100


@dataclass(frozen=True)
class ScenarioTemplate:
    kind: str = "crossing"
    agent_count: int = 10
    density_class: str = "medium"
    arena_size: float = 40.0
    rng_seed: int = 0
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.kind not in TEMPLATE_KINDS:
            raise ValueError(f"unknown template {self.kind!r}; expected one of {TEMPLATE_KINDS}")
        if self.agent_count < 1:
            raise ValueError("agent_count must be >= 1")
        if self.density_class not in DENSITY:
            raise ValueError(f"density_class must be one of {sorted(DENSITY)}")
        if not self.arena_size > 0 or not self.dt > 0:
            raise ValueError("arena_size and dt must be positive")

    @property
    def density(self) -> float:
        return DENSITY[self.density_class]


def default_params(kind, agent_ids, density_class: str = "medium") -> ModelParams:
    """Table means with the radius capped so the density class stays placeable."""
    kind = ModelKind.parse(kind)
    params = ModelParams.mean(kind, agent_ids)
    if kind != ModelKind.LIN:
        lo, _, _ = table_bounds(kind)
        c = RADIUS_COL[kind]
        params.values[:, c] = np.maximum(lo[c], np.minimum(params.values[:, c], RADIUS_CAP[density_class]))
    return params


def _place(rng, n, lo, hi, min_dist, existing=None):
    """Rejection-sample n points in the box [lo, hi] at pairwise distance > min_dist."""
    pts = [] if existing is None else [p for p in existing]
    out = []
    for _ in range(n):
        for _ in range(PLACEMENT_ATTEMPTS):
            p = rng.uniform(lo, hi)
            if all(math.dist(p, q) > min_dist for q in pts):
                pts.append(p)
                out.append(p)
                break
        else:
            raise DataError(f"could not place {n} agents without overlap after {PLACEMENT_ATTEMPTS} attempts")
    return np.array(out).reshape(-1, 2)


def _layout(t: ScenarioTemplate, rng: np.random.Generator, min_dist: float):
    """Initial positions, goals and wall segments for a template."""
    n = t.agent_count
    travel = t.arena_size / 2
    obstacles = np.zeros((0, 4))
    if t.kind == "crossing":
        na = (n + 1) // 2
        side_a = math.sqrt(na / t.density)
        side_b = math.sqrt(max(n - na, 1) / t.density)
        a = _place(rng, na, np.array([-1.0 - side_a, -side_a / 2]), np.array([-1.0, side_a / 2]), min_dist)
        b = _place(rng, n - na, np.array([-side_b / 2, -1.0 - side_b]), np.array([side_b / 2, -1.0]), min_dist)
        pos = np.vstack([a, b])
        goals = pos.copy()
        goals[:na, 0] += travel
        goals[na:, 1] += travel
    elif t.kind == "head_on_corridor":
        width = max(2.0, math.sqrt(n / t.density))
        length = max(1.0, (n / 2) / (t.density * width))
        na = (n + 1) // 2
        half = width / 2
        a = _place(rng, na, np.array([-1.0 - length, -half + min_dist / 2]),
                   np.array([-1.0, half - min_dist / 2]), min_dist)
        b = _place(rng, n - na, np.array([1.0, -half + min_dist / 2]),
                   np.array([1.0 + length, half - min_dist / 2]), min_dist, existing=a)
        pos = np.vstack([a, b])
        goals = pos.copy()
        goals[:, 0] = -pos[:, 0] + np.where(np.arange(n) < na, 1.0, -1.0) * 2.0
        wall = half + 0.5
        x0, x1 = -travel, travel
        obstacles = np.array([[x0, wall, x1, wall], [x0, -wall, x1, -wall]])
    elif t.kind == "circle_swap":
        spacing = 1.0 / math.sqrt(t.density)
        radius = max(1.5, n * max(spacing, min_dist + 0.05) / (2 * math.pi))
        ang = 2 * math.pi * np.arange(n) / n
        pos = radius * np.column_stack([np.cos(ang), np.sin(ang)])
        goals = -pos
    else:
        side = math.sqrt(n / t.density)
        pos = _place(rng, n, np.array([-side / 2] * 2), np.array([side / 2] * 2), min_dist)
        goals = rng.uniform(-travel / 2, travel / 2, size=(n, 2))
    return pos, goals, obstacles


def _initial_velocity(kind: ModelKind, pos, goals, params: np.ndarray):
    d = goals - pos
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    speed = np.full((len(pos), 1), COMFORT_SPEED_MEAN) if kind == ModelKind.LIN else \
        params[:, [SPEED_COL[kind]]]
    return np.where(norm > 0, d / np.where(norm > 0, norm, 1.0) * speed, 0.0)


def simulate(kind, states: Mapping[int, AgentState], scenario: Scenario, frames: int,
             params: ModelParams | None = None, constants: ModelConstants | None = None,
             first_frame: int = 0) -> TrajectoryDataset:
    """Step ``kind`` from ``states`` and record ``frames`` frames (the first is ``states``)."""
    kind = ModelKind.parse(kind)
    ids = sorted(states)
    pos = np.array([states[a].position for a in ids], dtype=float).reshape(-1, 2)
    vel = np.array([states[a].velocity for a in ids], dtype=float).reshape(-1, 2)
    goals = scenario.goals_for(ids)
    values = (params or ModelParams.mean(kind, ids)).rows_for(ids)
    out = []
    for f in range(frames):
        out.append((first_frame + f, arrays_to_states(ids, pos, vel)))
        if f + 1 < frames:
            pos, vel = step_arrays(kind, pos, vel, goals, values, scenario.obstacles, scenario.dt, constants)
    return dataset_from_states(out, frame_rate=1.0 / scenario.dt, source_tag="ground-truth")


def generate(template: ScenarioTemplate, model_kind, params: ModelParams | None = None,
             frames: int = DEFAULT_FRAMES, constants: ModelConstants | None = None):
    """Build a scenario from ``template`` and simulate it with one model.

    Returns ``(scenario, ground_truth, provenance)``; the provenance record
    holds the generating model, its per-agent parameters and the seed.
    """
    kind = ModelKind.parse(model_kind)
    if frames < 1:
        raise ValueError("frames must be >= 1")
    rng = np.random.default_rng(template.rng_seed)
    ids = list(range(template.agent_count))
    if params is None:
        params = default_params(kind, ids, template.density_class)
    params.validate()
    values = params.rows_for(ids)
    max_radius = float(values[:, RADIUS_COL[kind]].max()) if kind != ModelKind.LIN else 0.0
    pos, goals, obstacles = _layout(template, rng, 2 * max_radius)
    vel = _initial_velocity(kind, pos, goals, values)
    extent = max(template.arena_size, 2 * (np.abs(np.vstack([pos, goals])).max() + 2.0))
    scenario = Scenario(template.dt, (-extent / 2, -extent / 2, extent / 2, extent / 2), obstacles,
                        dict(zip(ids, goals)))
    gt = simulate(kind, arrays_to_states(ids, pos, vel), scenario, frames, params, constants)
    provenance = {
        "model": kind.label,
        "params": {str(a): r for a, r in params.records().items()},
        "seed": template.rng_seed,
        "template": asdict(template),
        "frames": frames,
        "constants": (constants or DEFAULT_CONSTANTS).to_json(),
    }
    return scenario, gt, provenance


def corrupt(gt: TrajectoryDataset, observation_sigma: float, dropout_prob: float = 0.0,
            rng_seed: int = 0) -> TrajectoryDataset:
    """Observations from ground truth: iid Gaussian position noise and
    independent per-record dropout. Velocities are not observed.

    Records are processed in canonical (frame, agent) order so the result
    does not depend on the input record order.
    """
    if observation_sigma < 0:
        raise ValueError("observation_sigma must be >= 0")
    if not 0.0 <= dropout_prob < 1.0:
        raise ValueError("dropout_prob must lie in [0, 1)")
    data = gt.sorted()
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, 1.0, size=(len(data), 2)) * observation_sigma
    keep = rng.random(len(data)) >= dropout_prob
    return TrajectoryDataset(data.frame[keep], data.agent_id[keep], (data.x + noise[:, 0])[keep],
                             (data.y + noise[:, 1])[keep], frame_rate=data.frame_rate, source_tag="observation")
