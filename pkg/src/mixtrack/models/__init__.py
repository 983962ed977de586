"""Parameterized crowd motion models: constant velocity, Boids, social forces
and ORCA-style reciprocal velocity obstacles."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..core import AgentState, DataError, Scenario, arrays_to_states, states_to_arrays
from . import kernels
from .params import (
    ALL_KINDS, DEFAULT_CONSTANTS, PARAM_TABLE, RADIUS_COL, SPEED_COL, ModelConstants,
    ModelKind, ModelParams, n_params, param_names, sample_base, table_bounds,
)

__all__ = [
    "ALL_KINDS", "ModelConstants", "ModelKind", "ModelParams", "PARAM_TABLE",
    "boids_step_forces", "n_params", "orca_constraints", "param_names", "rvo_new_velocity",
    "sample_base", "social_forces_net", "step", "step_arrays", "table_bounds",
]


def _consts(constants: ModelConstants | None) -> np.ndarray:
    return (constants or DEFAULT_CONSTANTS).to_array()


def _radii(kind: ModelKind, values: np.ndarray) -> np.ndarray:
    if kind == ModelKind.LIN:
        return np.zeros(len(values))
    return np.ascontiguousarray(values[:, RADIUS_COL[kind]], dtype=float)


def step_arrays(kind, pos, vel, goals, params, obstacles, dt, constants: ModelConstants | None = None):
    """Array form of :func:`step`; returns (new_pos, new_vel)."""
    kind = ModelKind.parse(kind)
    pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
    vel = np.ascontiguousarray(vel, dtype=float).reshape(-1, 2)
    goals = np.ascontiguousarray(goals, dtype=float).reshape(-1, 2)
    values = np.ascontiguousarray(params, dtype=float).reshape(len(pos), n_params(kind))
    obstacles = np.ascontiguousarray(obstacles, dtype=float).reshape(-1, 4)
    out_pos = np.empty_like(pos)
    out_vel = np.empty_like(vel)
    kernels.step_joint(int(kind), values, _radii(kind, values), pos, vel, goals, obstacles,
                       float(dt), _consts(constants), out_pos, out_vel)
    return out_pos, out_vel


def step(kind, states: Mapping[int, AgentState], scenario: Scenario, params: ModelParams | None = None,
         constants: ModelConstants | None = None, goals: Mapping[int, np.ndarray] | None = None
         ) -> dict[int, AgentState]:
    """Advance every agent by one ``scenario.dt`` under ``kind``.

    All agents read the same frozen input states (synchronous update).
    """
    kind = ModelKind.parse(kind)
    ids, pos, vel = states_to_arrays(states)
    if goals is None:
        goal_arr = scenario.goals_for(ids)
    else:
        missing = [a for a in ids if a not in goals]
        if missing:
            raise DataError(f"no goal for agent(s) {missing}")
        goal_arr = np.array([goals[a] for a in ids], dtype=float).reshape(-1, 2)
    if params is None:
        params = ModelParams.mean(kind, ids)
    if params.kind != kind:
        raise ValueError(f"parameters are for {params.kind.label}, not {kind.label}")
    missing = [a for a in ids if a not in params.agent_ids]
    if missing:
        raise ValueError(f"no {kind.label} parameters for agent(s) {missing}")
    params.validate()
    values = params.rows_for(ids)
    new_pos, new_vel = step_arrays(kind, pos, vel, goal_arr, values, scenario.obstacles, scenario.dt, constants)
    return arrays_to_states(ids, new_pos, new_vel)


def _neighbor_arrays(neighbors: Sequence[AgentState], radii, default_radius):
    pos = np.array([n.position for n in neighbors], dtype=float).reshape(-1, 2)
    vel = np.array([n.velocity for n in neighbors], dtype=float).reshape(-1, 2)
    if radii is None:
        rad = np.full(len(neighbors), float(default_radius))
    else:
        rad = np.asarray(radii, dtype=float).reshape(len(neighbors))
    return pos, vel, rad, np.arange(len(neighbors), dtype=np.int64)


def _row(kind: ModelKind, params) -> np.ndarray:
    if isinstance(params, Mapping):
        return np.array([float(params[n]) for n in param_names(kind)])
    return np.asarray(params, dtype=float).reshape(n_params(kind))


def orca_constraints(agent: AgentState, neighbors: Sequence[AgentState], obstacles, params,
                     dt: float = 0.1, neighbor_radii=None, constants: ModelConstants | None = None):
    """ORCA half-planes for one agent as (lines (m, 4), obstacle line count).

    Each row is (point, direction); permitted velocities lie left of the
    direction, i.e. ``det(direction, v - point) >= 0``.
    """
    row = _row(ModelKind.RVO, params)
    npos, nvel, nrad, nbr = _neighbor_arrays(neighbors, neighbor_radii, row[2])
    obstacles = np.ascontiguousarray(obstacles, dtype=float).reshape(-1, 4)
    consts = _consts(constants)
    lines = np.empty((len(obstacles) + int(consts[kernels._MAX_NB]), 4))
    nl, n_obst = kernels.orca_lines(agent.position[0], agent.position[1], agent.velocity[0], agent.velocity[1],
                                    row, npos, nvel, nrad, nbr, len(nbr), obstacles, float(dt), consts, lines)
    return lines[:nl].copy(), int(n_obst)


def solve_orca_lines(lines, max_speed: float, v_pref, n_obstacle_lines: int = 0):
    """Closest velocity to ``v_pref`` inside the speed disc and all half-planes.

    Returns (velocity, feasible). When infeasible the velocity minimises the
    largest violation of the agent half-planes.
    """
    lines = np.ascontiguousarray(lines, dtype=float).reshape(-1, 4)
    res = np.empty(2)
    ok = kernels.solve_orca(lines, len(lines), int(n_obstacle_lines), float(max_speed),
                            float(v_pref[0]), float(v_pref[1]), res)
    return res, bool(ok)


def rvo_new_velocity(agent: AgentState, neighbors: Sequence[AgentState], obstacles, params, v_pref,
                     dt: float = 0.1, neighbor_radii=None, constants: ModelConstants | None = None):
    """ORCA velocity for one agent given its preferred velocity."""
    row = _row(ModelKind.RVO, params)
    lines, n_obst = orca_constraints(agent, neighbors, obstacles, row, dt, neighbor_radii, constants)
    v, _ = solve_orca_lines(lines, min(row[0], (constants or DEFAULT_CONSTANTS).v_cap), v_pref, n_obst)
    return v


def boids_step_forces(agent: AgentState, neighbors: Sequence[AgentState], goal, params,
                      obstacles=None, dt: float = 0.1, neighbor_radii=None,
                      constants: ModelConstants | None = None, components: bool = False):
    """Boids steering acceleration (separation + alignment + cohesion + goal).

    With ``components=True`` returns a dict of the weighted terms instead.
    """
    c = constants or DEFAULT_CONSTANTS
    row = _row(ModelKind.BOIDS, params)
    npos, nvel, nrad, nbr = _neighbor_arrays(neighbors, neighbor_radii, row[0])
    obstacles = np.zeros((0, 4)) if obstacles is None else np.asarray(obstacles, dtype=float).reshape(-1, 4)
    sx, sy, ax, ay, cx, cy, gx, gy = kernels.boids_terms(
        agent.position[0], agent.position[1], agent.velocity[0], agent.velocity[1], float(goal[0]), float(goal[1]),
        row, npos, nvel, nrad, nbr, len(nbr), obstacles, float(dt), c.to_array())
    k = 1.0 / c.steer_time
    terms = {
        "separation": np.array([sx, sy]) * c.separation_weight * k,
        "alignment": np.array([ax, ay]) * c.alignment_weight * k,
        "cohesion": np.array([cx, cy]) * c.cohesion_weight * k,
        "goal": np.array([gx, gy]) * c.goal_weight * k,
    }
    if components:
        return terms
    return terms["separation"] + terms["alignment"] + terms["cohesion"] + terms["goal"]


def social_forces_net(agent: AgentState, neighbors: Sequence[AgentState], obstacles, goal, params,
                      dt: float = 0.1, neighbor_radii=None, constants: ModelConstants | None = None,
                      components: bool = False):
    """Net social force F^M + F^S + F^P (per unit mass) on one agent."""
    c = constants or DEFAULT_CONSTANTS
    row = _row(ModelKind.SOCIAL_FORCES, params)
    npos, nvel, nrad, nbr = _neighbor_arrays(neighbors, neighbor_radii, row[0])
    obstacles = np.zeros((0, 4)) if obstacles is None else np.asarray(obstacles, dtype=float).reshape(-1, 4)
    fmx, fmy, fsx, fsy, fpx, fpy = kernels.social_forces(
        agent.position[0], agent.position[1], agent.velocity[0], agent.velocity[1], float(goal[0]), float(goal[1]),
        row, npos, nvel, nrad, nbr, len(nbr), obstacles, float(dt), c.to_array())
    terms = {"motivation": np.array([fmx, fmy]), "social": np.array([fsx, fsy]), "physical": np.array([fpx, fpy])}
    if components:
        return terms
    return terms["motivation"] + terms["social"] + terms["physical"]


def mixture_arrays(kinds, values_by_kind: Mapping[ModelKind, np.ndarray], n: int):
    """Pack per-agent model choices and every model's parameter rows into the
    (kinds, prm, rad) layout used by :func:`kernels.advance`."""
    kinds = np.asarray([int(k) for k in kinds], dtype=np.int64).reshape(n)
    prm = np.zeros((4, n, 5))
    rad = np.zeros((4, n))
    for kind, values in values_by_kind.items():
        kind = ModelKind(kind)
        values = np.asarray(values, dtype=float).reshape(n, n_params(kind))
        prm[int(kind), :, :values.shape[1]] = values
        rad[int(kind)] = _radii(kind, values)
    for kind in ALL_KINDS:
        if kind not in values_by_kind and kind != ModelKind.LIN:
            _, _, mean = table_bounds(kind)
            prm[int(kind), :, :len(mean)] = mean
            rad[int(kind)] = mean[RADIUS_COL[kind]]
    return kinds, prm, rad


def mixed_step(kinds, values_by_kind, pos, vel, goals, obstacles, dt, constants: ModelConstants | None = None):
    """One synchronous step where agent i moves under model ``kinds[i]`` while
    perceiving every other agent's current state."""
    pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
    vel = np.ascontiguousarray(vel, dtype=float).reshape(-1, 2)
    n = len(pos)
    k, prm, rad = mixture_arrays(kinds, values_by_kind, n)
    out_pos = np.empty_like(pos)
    out_vel = np.empty_like(vel)
    kernels.advance(k, prm, rad, pos, vel, np.ascontiguousarray(goals, dtype=float).reshape(n, 2),
                    np.ascontiguousarray(obstacles, dtype=float).reshape(-1, 4), float(dt), _consts(constants),
                    pos, vel, np.arange(n + 1), np.zeros((n, 2)), 0.0, 0, n, out_pos, out_vel)
    return out_pos, out_vel
