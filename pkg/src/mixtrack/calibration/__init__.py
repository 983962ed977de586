"""Mixture motion model calibration.

Each model's per-agent parameters are fitted to the sliding state window by
replaying the window from its oldest snapshot and scoring the summed position
error; the model (globally or per agent) with the lowest error is selected.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..core import AgentState, DataError, Scenario, StateHistory, arrays_to_states, states_to_arrays
from ..models import kernels, mixed_step
from ..models.params import (
    ALL_KINDS, DEFAULT_CONSTANTS, ModelConstants, ModelKind, ModelParams, n_params, table_bounds,
)
from .optimizers import (
    METHODS, OptimizeResult, OptimizerSpec, SearchSpace, optimize, run_genetic, run_greedy,
    run_simulated_annealing,
)

__all__ = [
    "CalibrationResult", "LIVE_GOAL_HORIZON", "METHODS", "OptimizeResult", "OptimizerSpec", "ReplayProblem",
    "SearchSpace", "optimize", "optimize_params", "predict_next", "replay_error", "run_genetic",
    "run_greedy", "run_simulated_annealing", "select_model",
]

LIVE_GOAL_HORIZON = 2.0  # seconds of velocity extrapolation for live goals
MODES = ("per-agent", "global")


class ReplayProblem:
    """Replay-error cost for one model over a frozen window.

    Only agents present in both the oldest and the newest snapshot can be
    replayed (they need a start state and a goal); they are the ``agent_ids``.
    Frames where an agent is missing do not contribute to its error.
    """

    def __init__(self, kind, window: StateHistory, scenario: Scenario,
                 constants: ModelConstants | None = None, threads: int = 1):
        if len(window) < 2:
            raise DataError("replay needs a window of at least 2 snapshots")
        self.kind = ModelKind.parse(kind)
        ids, pos, vel, present = window.to_arrays()
        active = present[0] & present[-1]
        self.agent_ids = [a for a, ok in zip(ids, active) if ok]
        pos, vel, present = pos[:, active], vel[:, active], present[:, active]
        self.present = np.ascontiguousarray(present)
        self.s_pos = np.ascontiguousarray(np.where(present[..., None], pos, 0.0))
        self.vel0 = np.ascontiguousarray(vel[0])
        self.goals = np.ascontiguousarray(pos[-1])
        self.obstacles = np.ascontiguousarray(scenario.obstacles, dtype=float).reshape(-1, 4)
        self.dt = float(window.dt)
        self.consts = (constants or DEFAULT_CONSTANTS).to_array()
        self.threads = max(1, int(threads))
        self.n_params = n_params(self.kind)
        self.evaluations = 0
        self._best_total = np.inf
        self._best_rows: dict[bytes, np.ndarray] = {}

    @property
    def n_agents(self) -> int:
        return len(self.agent_ids)

    def space(self) -> SearchSpace:
        return SearchSpace.for_model(self.kind, self.n_agents)

    def agent_errors(self, rows) -> np.ndarray:
        """Per-agent replay errors, shape (B, n_agents), without budget accounting."""
        rows = np.ascontiguousarray(np.atleast_2d(rows), dtype=float)
        B = len(rows)
        params = rows.reshape(B, self.n_agents, self.n_params)
        errors = np.zeros((B, self.n_agents))
        if not self.n_agents or not B:
            return errors
        if self.threads == 1 or B < 2:
            self._run(params, errors)
            return errors
        chunks = np.array_split(np.arange(B), min(self.threads, B))
        with ThreadPoolExecutor(self.threads) as pool:
            list(pool.map(lambda c: self._run(params[c[0]:c[-1] + 1], errors[c[0]:c[-1] + 1]), chunks))
        return errors

    def _run(self, params, errors):
        kernels.replay_batch(int(self.kind), self.s_pos, self.vel0, self.present, self.goals,
                             np.ascontiguousarray(params), self.obstacles, self.dt, self.consts, errors)

    def __call__(self, rows) -> np.ndarray:
        """Total replay error per candidate row (counts as ``len(rows)`` evaluations)."""
        rows = np.atleast_2d(rows)
        per_agent = self.agent_errors(rows)
        self.evaluations += len(rows)
        totals = per_agent.sum(axis=1)
        # keep the per-agent split of every candidate that ties or beats the best so far
        for r, total, errs in zip(rows, totals, per_agent):
            if total < self._best_total:
                self._best_total = total
                self._best_rows = {}
            if total <= self._best_total:
                self._best_rows[np.asarray(r, dtype=float).tobytes()] = errs
        return totals

    def errors_of(self, x) -> np.ndarray:
        """Per-agent errors of a candidate already scored through ``__call__``."""
        hit = self._best_rows.get(np.asarray(x, dtype=float).tobytes())
        return hit.copy() if hit is not None else self.agent_errors(x)[0]


def _as_params(kind: ModelKind, ids, params) -> np.ndarray:
    if params is None:
        return ModelParams.mean(kind, ids).rows_for(ids)
    if isinstance(params, ModelParams):
        if params.kind != kind:
            raise ValueError(f"parameters are for {params.kind.label}, not {kind.label}")
        return params.rows_for(ids)
    return np.asarray(params, dtype=float).reshape(len(ids), n_params(kind))


def replay_error(kind, params, window: StateHistory, scenario: Scenario, per_agent: bool = False,
                 constants: ModelConstants | None = None):
    """Summed distance between the window and its model replay.

    The replay starts from the oldest snapshot with goals at the newest
    positions. With ``per_agent=True`` returns ``(total, {agent_id: error})``.
    """
    problem = ReplayProblem(kind, window, scenario, constants)
    rows = _as_params(problem.kind, problem.agent_ids, params)
    errs = problem.agent_errors(rows.reshape(1, -1))[0]
    total = float(errs.sum())
    if per_agent:
        return total, dict(zip(problem.agent_ids, map(float, errs)))
    return total


def _kind_seed(seed, kind: ModelKind):
    if isinstance(seed, (list, tuple)):
        return (*seed, int(kind))
    return (int(seed), int(kind))


def _fit(problem: ReplayProblem, spec: OptimizerSpec, warm: ModelParams | None):
    kind = problem.kind
    ids = problem.agent_ids
    if kind == ModelKind.LIN or not ids:
        errs = problem.agent_errors(np.zeros((1, len(ids) * problem.n_params)))[0]
        return ModelParams(kind, ids, np.zeros((len(ids), problem.n_params))), errs, 0
    seeds = None
    if warm is not None and warm.kind == kind:
        seeds = [warm.rows_for(ids).reshape(-1)]
    res = optimize(problem, problem.space(), spec.with_seed(_kind_seed(spec.seed, kind)), seeds=seeds)
    values = res.x.reshape(len(ids), problem.n_params)
    return ModelParams(kind, ids, values), problem.errors_of(res.x), res.evaluations


def optimize_params(kind, window: StateHistory, scenario: Scenario, spec: OptimizerSpec | None = None,
                    constants: ModelConstants | None = None, warm_start: ModelParams | None = None,
                    threads: int = 1):
    """Fit one model's per-agent parameters; returns (params, replay error).

    LIN has no parameters and returns its raw replay error without searching.
    """
    spec = spec or OptimizerSpec()
    problem = ReplayProblem(kind, window, scenario, constants, threads)
    params, errs, _ = _fit(problem, spec, warm_start)
    return params, float(errs.sum())


@dataclass
class CalibrationResult:
    best_kind: ModelKind
    best_params: ModelParams
    per_model_error: dict[ModelKind, float]
    evaluations_used: int
    wall_time: float
    mode: str = "per-agent"
    agent_ids: list[int] = field(default_factory=list)
    params: dict[ModelKind, ModelParams] = field(default_factory=dict)
    agent_errors: dict[ModelKind, np.ndarray] = field(default_factory=dict)
    assignment: dict[int, ModelKind] = field(default_factory=dict)
    constants: ModelConstants = DEFAULT_CONSTANTS

    def model_of(self, agent_id: int) -> ModelKind:
        if self.mode == "global":
            return self.best_kind
        return self.assignment.get(int(agent_id), self.best_kind)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "best_model": self.best_kind.label,
            "per_model_error": {k.label: float(v) for k, v in self.per_model_error.items()},
            "assignment": {str(a): k.label for a, k in sorted(self.assignment.items())},
            "params": {k.label: {str(a): r for a, r in p.records().items()}
                       for k, p in self.params.items() if k != ModelKind.LIN},
            "evaluations": int(self.evaluations_used),
            "wall_time": float(self.wall_time),
        }


def select_model(window: StateHistory, scenario: Scenario, spec: OptimizerSpec | None = None,
                 mode: str = "per-agent", constants: ModelConstants | None = None,
                 warm_start: CalibrationResult | None = None, kinds=ALL_KINDS,
                 threads: int = 1) -> CalibrationResult:
    """Fit every model to the window and pick the best one(s).

    ``best_kind`` is always the argmin of total error. In per-agent mode each
    agent is also assigned the model minimizing its own error contribution.
    Ties go to the cheaper model (LIN < Boids < SocialForces < RVO).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    spec = spec or OptimizerSpec()
    constants = constants or DEFAULT_CONSTANTS
    kinds = sorted(ModelKind.parse(k) for k in kinds)
    start = time.perf_counter()
    params, errors, per_model = {}, {}, {}
    used = 0
    ids: list[int] = []
    for kind in kinds:
        problem = ReplayProblem(kind, window, scenario, constants, threads)
        ids = problem.agent_ids
        warm = warm_start.params.get(kind) if warm_start is not None else None
        p, errs, ev = _fit(problem, spec, warm)
        params[kind], errors[kind], per_model[kind] = p, errs, float(errs.sum())
        used += ev
    best_kind = min(kinds, key=lambda k: (per_model[k], int(k)))
    table = np.stack([errors[k] for k in kinds]) if ids else np.zeros((len(kinds), 0))
    assignment = {a: kinds[int(np.argmin(table[:, j]))] for j, a in enumerate(ids)}
    return CalibrationResult(best_kind, params[best_kind], per_model, used, time.perf_counter() - start,
                             mode, list(ids), params, errors, assignment, constants)


def live_goals(current: Mapping[int, AgentState], horizon: float = LIVE_GOAL_HORIZON) -> dict[int, np.ndarray]:
    return {a: s.position + horizon * s.velocity for a, s in current.items()}


def predict_next(result: CalibrationResult, current: Mapping[int, AgentState], scenario: Scenario,
                 goals: Mapping[int, np.ndarray] | None = None, dt: float | None = None) -> dict[int, AgentState]:
    """Step every agent once under its selected model and fitted parameters.

    Goals default to a 2 s extrapolation along each agent's velocity. Agents
    unknown to the calibration keep the table mean parameters.
    """
    ids, pos, vel = states_to_arrays(current)
    if goals is None:
        goals = live_goals(current)
    missing = [a for a in ids if a not in goals]
    if missing:
        raise DataError(f"no goal for agent(s) {missing}")
    goal_arr = np.array([goals[a] for a in ids], dtype=float).reshape(-1, 2)
    kinds = [result.model_of(a) for a in ids]
    values = {k: (result.params[k].rows_for(ids) if k in result.params else
                  np.tile(table_bounds(k)[2], (len(ids), 1))) for k in ALL_KINDS}
    new_pos, new_vel = mixed_step(kinds, values, pos, vel, goal_arr, scenario.obstacles,
                                  scenario.dt if dt is None else dt, result.constants)
    return arrays_to_states(ids, new_pos, new_vel)
