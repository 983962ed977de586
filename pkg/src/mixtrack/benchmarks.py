"""Benchmark suites shared by the command line and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .calibration import OptimizerSpec, ReplayProblem, optimize
from .core import DataError, StateHistory, TrajectoryDataset, finite_difference_velocities, push_state
from .evaluation import MatchConfig, clear_mot, rms_error, success_and_switches
from .models.params import ModelKind
from .synthesis import ScenarioTemplate, corrupt, generate
from .tracking import TrackerConfig, track

OPTIMIZER_METHODS = ("genetic", "annealing", "greedy")
TRACKING_METHODS = ("mixture", "lin", "boids", "socialforces", "rvo")


def window_from_dataset(ds: TrajectoryDataset, end_frame: int, k: int, v_cap: float = 5.0) -> StateHistory:
    """The k+1 snapshots ending at ``end_frame``; velocities come from the
    file when present, otherwise from finite differences."""
    velocities = None
    if not ds.has_velocity:
        velocities, _ = finite_difference_velocities(ds)
    dt = 1.0 / ds.frame_rate
    w = StateHistory(k, dt)
    frames = set(ds.frames().tolist())
    for f in range(end_frame - k, end_frame + 1):
        if f < 0 or f not in frames:
            raise DataError(f"frame {f} missing for a window ending at {end_frame}")
        snap = {a: s.capped(v_cap) for a, s in ds.snapshot(f, velocities).items()}
        push_state(w, snap, f * dt)
    return w


def optimizer_comparison(seeds=range(10), kinds=("boids", "rvo"), agents: int = 12, window: int = 30,
                         evaluations: int = 600, template: str = "random_goals", density: str = "medium",
                         methods=OPTIMIZER_METHODS, threads: int = 1) -> list[dict]:
    """Final replay error of each optimizer on self-generated windows.

    Every optimizer gets the same evaluation cap; the genetic search keeps
    its stagnation limit (K = 20) while annealing and greedy run to the cap.
    """
    rows = []
    for kind in kinds:
        kind = ModelKind.parse(kind)
        for seed in seeds:
            tmpl = ScenarioTemplate(template, agents, density, rng_seed=int(seed))
            scenario, gt, _ = generate(tmpl, kind, frames=window)
            w = window_from_dataset(gt, window - 1, window - 1)
            for method in methods:
                problem = ReplayProblem(kind, w, scenario, threads=threads)
                budget = 20 if method == "genetic" else evaluations
                spec = OptimizerSpec(method=method, budget=budget, seed=(int(seed), int(kind)),
                                     max_evaluations=evaluations)
                start = time.perf_counter()
                res = optimize(problem, problem.space(), spec)
                rows.append({"task": kind.label, "method": method, "seed": int(seed), "error": float(res.cost),
                             "evaluations": int(problem.evaluations),
                             "time": time.perf_counter() - start})
    return rows


def summarize(rows, key: str = "error") -> dict[str, dict[str, dict[str, float]]]:
    """task -> method -> {min, mean, max, median} of ``key``."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    for task in dict.fromkeys(r["task"] for r in rows):
        out[task] = {}
        for method in dict.fromkeys(r["method"] for r in rows if r["task"] == task):
            v = np.array([r[key] for r in rows if r["task"] == task and r["method"] == method])
            out[task][method] = {"min": float(v.min()), "mean": float(v.mean()), "max": float(v.max()),
                                 "median": float(np.median(v))}
    return out


def tracker_config_for(method: str, base: TrackerConfig) -> TrackerConfig:
    if method == "mixture":
        return replace(base, forced_model=None)
    return replace(base, forced_model=ModelKind.parse(method))


def make_suite_case(seed: int, density: str, agents: int = 50, frames: int = 200, model="rvo",
                    template: str = "random_goals", sigma: float = 0.1, dropout: float = 0.0):
    tmpl = ScenarioTemplate(template, agents, density, rng_seed=int(seed))
    scenario, gt, prov = generate(tmpl, model, frames=frames)
    obs = corrupt(gt, sigma, dropout, rng_seed=int(seed) + 1000)
    return scenario, gt, obs, prov


def tracking_comparison(seeds=range(3), densities=("low", "medium"), methods=TRACKING_METHODS, agents: int = 50,
                        frames: int = 200, model="rvo", template: str = "random_goals", sigma: float = 0.1,
                        dropout: float = 0.0, base: TrackerConfig | None = None,
                        match: MatchConfig | None = None) -> list[dict]:
    """Track the same corrupted scenarios with the mixture and each forced model."""
    base = base or TrackerConfig()
    match = match or MatchConfig()
    rows = []
    for density in densities:
        for seed in seeds:
            scenario, gt, obs, _ = make_suite_case(seed, density, agents, frames, model, template, sigma, dropout)
            for method in methods:
                cfg = tracker_config_for(method, replace(base, seed=int(seed)))
                res = track(obs, scenario, cfg)
                st = success_and_switches(gt, res.estimates, match)
                mot = clear_mot(gt, res.estimates, match)
                rows.append({"density": density, "seed": int(seed), "method": method,
                             "success_rate": st.rate, "id_switches": st.id_switches,
                             "rms": rms_error(gt, res.estimates), "mota": mot.mota, "motp": mot.motp,
                             "mean_particles": res.mean_particles, "steps_per_second": res.steps_per_second,
                             "wall_time": res.wall_time})
    return rows


def throughput(agents: int = 50, frames: int = 100, seed: int = 0, density: str = "medium",
               base: TrackerConfig | None = None) -> dict:
    """Tracking steps per second on a fresh RVO scenario."""
    scenario, gt, obs, _ = make_suite_case(seed, density, agents, frames)
    cfg = replace(base or TrackerConfig(), seed=seed)
    res = track(obs, scenario, cfg)
    return {"agents": agents, "steps": res.steps, "wall_time": res.wall_time,
            "steps_per_second": res.steps_per_second, "mean_particles": res.mean_particles}

