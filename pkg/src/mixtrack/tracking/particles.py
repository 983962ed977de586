"""Single-agent particle filter building blocks and confidence scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import DEFAULT_V_CAP, AgentState, StateHistory
from . import kernels

N_MIN = 20
N_MAX = 200
D_MAX = 0.8


@dataclass(frozen=True)
class NoiseModel:
    process_sigma: float = 0.06
    observation_sigma: float = 0.1

    def __post_init__(self):
        if self.process_sigma < 0 or self.observation_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class Particle:
    state: AgentState
    weight: float


class ParticleSet:
    """Weighted particles of one agent, stored as arrays."""

    def __init__(self, agent_id: int, pos, vel, weights=None, lost: bool = False):
        self.agent_id = int(agent_id)
        self.pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
        self.vel = np.ascontiguousarray(vel, dtype=float).reshape(-1, 2)
        n = len(self.pos)
        if n == 0 or len(self.vel) != n:
            raise ValueError("a particle set needs matching, non-empty position and velocity arrays")
        self.weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float).reshape(n)
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and non-negative")
        self.lost = bool(lost)

    @classmethod
    def around(cls, agent_id: int, state: AgentState, n: int, sigma: float = 0.0, rng=None) -> "ParticleSet":
        pos = np.tile(state.position, (n, 1))
        if sigma > 0:
            pos = pos + (rng or np.random.default_rng()).normal(0.0, sigma, (n, 2))
        return cls(agent_id, pos, np.tile(state.velocity, (n, 1)))

    @property
    def n(self) -> int:
        return len(self.pos)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(AgentState(p, v), float(w)) for p, v, w in zip(self.pos, self.vel, self.weights)]

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.agent_id, self.pos.copy(), self.vel.copy(), self.weights.copy(), self.lost)


def propagate(pset: ParticleSet, prior: Callable[[np.ndarray, np.ndarray], tuple], noise: NoiseModel,
              rng: np.random.Generator, dt: float, v_cap: float = DEFAULT_V_CAP) -> ParticleSet:
    """Step every particle with ``prior(pos, vel) -> (pos, vel)`` and add
    Gaussian process noise to positions; with noise the velocity becomes the
    particle's own finite-difference displacement rate."""
    new_pos, new_vel = prior(pset.pos.copy(), pset.vel.copy())
    new_pos = np.asarray(new_pos, dtype=float).reshape(pset.n, 2)
    new_vel = np.asarray(new_vel, dtype=float).reshape(pset.n, 2)
    if noise.process_sigma > 0:
        new_pos = new_pos + rng.normal(0.0, noise.process_sigma, (pset.n, 2))
        new_vel = (new_pos - pset.pos) / dt
        speed = np.linalg.norm(new_vel, axis=1, keepdims=True)
        new_vel = np.where(speed > v_cap, new_vel * (v_cap / np.maximum(speed, 1e-300)), new_vel)
    return ParticleSet(pset.agent_id, new_pos, new_vel, pset.weights.copy())


def reweight(pset: ParticleSet, observation, noise: NoiseModel) -> ParticleSet:
    """Bayes update with a Gaussian position likelihood.

    ``observation`` is an AgentState or a position. When all likelihoods
    underflow, weights become uniform and the result's ``lost`` flag is set.
    """
    obs = observation.position if isinstance(observation, AgentState) else np.asarray(observation, dtype=float)
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation must be finite")
    out = pset.copy()
    lost = np.zeros(1, dtype=np.bool_)
    kernels.reweight_range(out.pos, out.weights, np.array([0, out.n]), obs.reshape(1, 2),
                           np.ones(1, dtype=np.bool_), float(noise.observation_sigma), 0, 1, lost)
    out.lost = bool(lost[0])
    return out


def resample(pset: ParticleSet, target: int | None = None, rng: np.random.Generator | None = None) -> ParticleSet:
    """Systematic resampling to ``target`` particles with uniform weights."""
    m = pset.n if target is None else int(target)
    if m < 1:
        raise ValueError("target particle count must be >= 1")
    rng = rng or np.random.default_rng()
    index = np.empty(m, dtype=np.int64)
    kernels.systematic_range(pset.weights / pset.weights.sum(), np.array([0, pset.n]), np.array([0, m]),
                             np.array([rng.random()]), 0, 1, index)
    return ParticleSet(pset.agent_id, pset.pos[index], pset.vel[index])


def estimate(pset: ParticleSet) -> AgentState:
    """Weighted mean particle state."""
    w = pset.weights / pset.weights.sum()
    return AgentState(w @ pset.pos, w @ pset.vel)


@dataclass(frozen=True)
class Confidence:
    propagation: float
    motion_model: float
    combined: float


def _clamp01(x):
    return np.clip(x, 0.0, 1.0)


def propagation_reliability(step, drift, elapsed, v_cap: float, dt: float):
    """pr = clamp(1 - step / (v_cap dt)) * clamp(1 - drift / (v_cap dt elapsed)).

    ``step`` is the last frame-to-frame move of the tracked state and
    ``drift`` its displacement over ``elapsed`` frames. Works on arrays.
    """
    unit = v_cap * dt
    elapsed = np.maximum(np.asarray(elapsed, dtype=float), 1.0)
    return _clamp01(1.0 - np.asarray(step) / unit) * _clamp01(1.0 - np.asarray(drift) / (unit * elapsed))


def motion_model_reliability(residual, d_max: float = D_MAX):
    """mmr = clamp(1 - residual / d_max): 1 for a perfect prediction, 0 beyond d_max."""
    return _clamp01(1.0 - np.asarray(residual) / d_max)


def confidence(window: StateHistory, agent_id: int, tracked: AgentState, prediction,
               v_cap: float = DEFAULT_V_CAP, d_max: float = D_MAX) -> Confidence:
    """Confidence of the newly tracked state of one agent.

    The window holds the states before ``tracked``: its newest entry for the
    agent is the previous tracked state and its earliest entry is the drift
    origin. ``prediction`` is the model's noiseless forecast of ``tracked``.
    """
    snaps = window.snapshots
    if len(snaps) < 1:
        raise ValueError("confidence needs a non-empty window")
    seen = [i for i, s in enumerate(snaps) if agent_id in s]
    if not seen:
        raise ValueError(f"agent {agent_id} not in the window")
    prev = snaps[seen[-1]][agent_id].position
    origin = snaps[seen[0]][agent_id].position
    elapsed = len(snaps) - seen[0]
    pred = prediction.position if isinstance(prediction, AgentState) else np.asarray(prediction, dtype=float)
    pr = float(propagation_reliability(np.linalg.norm(tracked.position - prev),
                                       np.linalg.norm(tracked.position - origin), elapsed, v_cap, window.dt))
    mmr = float(motion_model_reliability(np.linalg.norm(tracked.position - pred), d_max))
    return Confidence(pr, mmr, pr * mmr)


def adapt_particle_count(combined, n_min: int = N_MIN, n_max: int = N_MAX):
    """n = round(N_max - combined (N_max - N_min)) clamped to [N_min, N_max]."""
    if not 1 <= n_min <= n_max:
        raise ValueError("need 1 <= n_min <= n_max")
    c = _clamp01(np.asarray(combined, dtype=float))
    n = np.floor(n_max - c * (n_max - n_min) + 0.5).astype(np.int64)
    n = np.clip(n, n_min, n_max)
    return int(n) if n.ndim == 0 else n
