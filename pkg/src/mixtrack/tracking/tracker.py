"""Particle-filter tracking with the calibrated motion-model mixture as prior."""

from __future__ import annotations

import csv
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..calibration import CalibrationResult, LIVE_GOAL_HORIZON, OptimizerSpec, select_model
from ..core import DEFAULT_K, AgentState, DataError, Scenario, StateHistory, TrajectoryDataset, push_state
from ..models import kernels as mk
from ..models import mixture_arrays
from ..models.params import ALL_KINDS, DEFAULT_CONSTANTS, ModelConstants, ModelKind, ModelParams, table_bounds
from . import kernels
from .particles import D_MAX, N_MAX, N_MIN, NoiseModel, adapt_particle_count, motion_model_reliability, \
    propagation_reliability

# light per-window search so recalibration fits the frame budget
TRACKER_OPTIMIZER = OptimizerSpec(method="genetic", budget=2, pool_size=8, max_evaluations=40)
NEIGHBOR_MARGIN = 0.3  # extra neighbour search radius covering particle spread, meters
DIAGNOSTIC_COLUMNS = ("frame", "agent_id", "model", "particles", "pr", "mmr", "err")


@dataclass(frozen=True)
class TrackerConfig:
    k: int = DEFAULT_K
    recalibrate_every: int = 5
    optimizer: OptimizerSpec = TRACKER_OPTIMIZER
    noise: NoiseModel = NoiseModel()
    n_min: int = N_MIN
    n_max: int = N_MAX
    adaptive: bool = True
    mode: str = "per-agent"
    forced_model: ModelKind | None = None
    constants: ModelConstants = DEFAULT_CONSTANTS
    d_max: float = D_MAX
    occlusion_factor: float = 0.5
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.k < 1 or self.recalibrate_every < 1:
            raise ValueError("k and recalibrate_every must be >= 1")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.mode not in ("per-agent", "global"):
            raise ValueError("mode must be 'per-agent' or 'global'")
        if not self.d_max > 0 or not 0 <= self.occlusion_factor <= 1:
            raise ValueError("d_max must be > 0 and occlusion_factor in [0, 1]")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.forced_model is not None:
            object.__setattr__(self, "forced_model", ModelKind.parse(self.forced_model))

    def with_(self, **changes) -> "TrackerConfig":
        return replace(self, **changes)


@dataclass
class TrackResult:
    estimates: TrajectoryDataset
    diagnostics: dict[str, list] = field(default_factory=dict)
    calibrations: list[tuple[int, CalibrationResult]] = field(default_factory=list)
    wall_time: float = 0.0
    steps: int = 0
    max_weight_error: float = 0.0
    lost_events: int = 0

    @property
    def steps_per_second(self) -> float:
        return self.steps / self.wall_time if self.wall_time > 0 else float("inf")

    @property
    def mean_particles(self) -> float:
        p = self.diagnostics.get("particles", [])
        return float(np.mean(p)) if p else 0.0

    def model_frequency(self) -> dict[str, float]:
        models = self.diagnostics.get("model", [])
        counts = Counter(models)
        return {k.label: counts.get(k.label, 0) / len(models) if models else 0.0 for k in ALL_KINDS}

    def write_diagnostics(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIAGNOSTIC_COLUMNS)
            d = self.diagnostics
            for row in zip(*(d[c] for c in DIAGNOSTIC_COLUMNS)):
                f, a, m, n, pr, mmr, err = row
                w.writerow([f, a, m, n, repr(float(pr)), repr(float(mmr)), repr(float(err))])


def _seed_velocities(frames, xy, dt, v_cap):
    """Least-squares velocity of one agent over the initialization frames."""
    if len(frames) < 2:
        return np.zeros(2)
    t = (frames - frames.mean()) * dt
    v = (t @ (xy - xy.mean(axis=0))) / (t @ t)
    s = float(np.hypot(*v))
    return v * (v_cap / s) if s > v_cap else v


def _forced_result(kind: ModelKind, window: StateHistory, scenario: Scenario, cfg: TrackerConfig,
                   warm: CalibrationResult | None) -> CalibrationResult:
    if kind == ModelKind.LIN:
        ids = window.agent_ids()
        p = ModelParams(kind, ids)
        return CalibrationResult(kind, p, {kind: 0.0}, 0, 0.0, "global", ids, {kind: p}, {}, {}, cfg.constants)
    res = select_model(window, scenario, cfg.optimizer, "global", cfg.constants, warm, kinds=[kind])
    return res


class _Runner:
    """Splits per-agent kernels over a fixed set of agent ranges."""

    def __init__(self, threads: int):
        self.threads = threads
        self.pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def ranges(self, n):
        if self.pool is None or n < 2:
            return [(0, n)]
        bounds = np.linspace(0, n, min(self.threads, n) + 1).astype(int)
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def run(self, fn, n):
        rs = self.ranges(n)
        if len(rs) == 1:
            fn(*rs[0])
            return
        list(self.pool.map(lambda r: fn(*r), rs))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def track(observations: TrajectoryDataset, scenario: Scenario, config: TrackerConfig | None = None,
          progress=None) -> TrackResult:
    """Track every observed agent through the observation frames.

    The first k frames seed the state window verbatim. Each later frame
    recalibrates the mixture on cadence, propagates particles under each
    agent's selected model, reweights with the frame's observation, estimates,
    scores confidence, adapts the particle count, resamples and pushes the
    estimate into the window. Agents missing from a frame are predicted only.
    """
    cfg = config or TrackerConfig()
    obs = observations.sorted()
    if not len(obs):
        raise DataError("no observations")
    f0, f_end = int(obs.frame.min()), int(obs.frame.max())
    if f_end - f0 + 1 < cfg.k + 1:
        raise DataError(f"tracking needs at least k+1 = {cfg.k + 1} frames, got {f_end - f0 + 1}")
    dt = float(scenario.dt)
    v_cap = cfg.constants.v_cap
    sigma_q = cfg.noise.process_sigma
    by_frame = obs.by_frame()
    start = time.perf_counter()

    # initialization: frames f0 .. f0+k-1 verbatim, least-squares velocities
    init_frames = range(f0, f0 + cfg.k)
    seed_vel = {}
    for a in obs.agents().tolist():
        fr, xy = obs.track(a)
        m = fr < f0 + cfg.k
        if m.any():
            seed_vel[a] = _seed_velocities(fr[m].astype(float), xy[m], dt, v_cap)
    window = StateHistory(cfg.k, dt)
    out_rows: list[tuple[int, int, np.ndarray, np.ndarray]] = []
    for f in init_frames:
        snap = {a: AgentState(p, seed_vel[a]) for a, p in sorted(by_frame.get(f, {}).items())}
        push_state(window, snap, f * dt)
        out_rows.extend((f, a, s.position, s.velocity) for a, s in snap.items())

    tracked: dict[int, AgentState] = {}
    for snap in window.snapshots:
        tracked.update(snap)
    ids = sorted(tracked)
    n_init = cfg.n_max
    counts = np.full(len(ids), n_init, dtype=np.int64)
    ppos = np.repeat(np.array([tracked[a].position for a in ids]).reshape(-1, 2), counts, axis=0)
    pvel = np.repeat(np.array([tracked[a].velocity for a in ids]).reshape(-1, 2), counts, axis=0)
    if cfg.noise.observation_sigma > 0 and len(ppos):
        rng = np.random.default_rng([cfg.seed, f0 + cfg.k - 1])
        ppos = ppos + rng.normal(0.0, cfg.noise.observation_sigma, ppos.shape)

    diag = {c: [] for c in DIAGNOSTIC_COLUMNS}
    result = TrackResult(None, diag)
    calib: CalibrationResult | None = None
    runner = _Runner(cfg.threads)
    consts = cfg.constants.to_array()
    obstacles = np.ascontiguousarray(scenario.obstacles, dtype=float).reshape(-1, 4)
    try:
        for f in range(f0 + cfg.k, f_end + 1):
            step_index = f - (f0 + cfg.k)
            if step_index % cfg.recalibrate_every == 0:
                snapshot = window.copy()
                if cfg.forced_model is not None:
                    calib = _forced_result(cfg.forced_model, snapshot, scenario, cfg, calib)
                else:
                    calib = select_model(snapshot, scenario, cfg.optimizer, cfg.mode, cfg.constants, calib,
                                         threads=cfg.threads)
                result.calibrations.append((f, calib))

            n = len(ids)
            frame_obs = by_frame.get(f, {})
            prev_pos = np.array([tracked[a].position for a in ids], dtype=float).reshape(n, 2)
            prev_vel = np.array([tracked[a].velocity for a in ids], dtype=float).reshape(n, 2)
            goals = np.ascontiguousarray(prev_pos + LIVE_GOAL_HORIZON * prev_vel)
            kinds = [calib.model_of(a) for a in ids]
            values = {k: (calib.params[k].rows_for(ids) if k in calib.params
                          else np.tile(table_bounds(k)[2], (n, 1))) for k in ALL_KINDS}
            kind_arr, prm, rad = mixture_arrays(kinds, values, n)
            offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

            # noiseless one-step forecast from the previous tracked states
            pred_pos = np.empty((n, 2))
            pred_vel = np.empty((n, 2))
            unit = np.arange(n + 1, dtype=np.int64)
            zeros = np.zeros((n, 2))
            runner.run(lambda lo, hi: mk.advance(kind_arr, prm, rad, prev_pos, prev_vel, goals, obstacles, dt,
                                                 consts, prev_pos, prev_vel, unit, zeros, 0.0, lo, hi,
                                                 pred_pos, pred_vel), n)

            # per-agent random streams keyed by (seed, frame, agent)
            noise = np.zeros((len(ppos), 2))
            u0 = np.empty(n)
            for j, a in enumerate(ids):
                rng = np.random.default_rng([cfg.seed, f, a])
                if sigma_q > 0:
                    noise[offsets[j]:offsets[j + 1]] = rng.normal(0.0, sigma_q, (counts[j], 2))
                u0[j] = rng.random()

            new_pos = np.empty_like(ppos)
            new_vel = np.empty_like(pvel)
            runner.run(lambda lo, hi: mk.advance(kind_arr, prm, rad, prev_pos, prev_vel, goals, obstacles, dt,
                                                 consts, ppos, pvel, offsets, noise, NEIGHBOR_MARGIN, lo, hi,
                                                 new_pos, new_vel), n)

            observed = np.array([a in frame_obs for a in ids], dtype=np.bool_)
            obs_xy = np.array([frame_obs[a] if a in frame_obs else (0.0, 0.0) for a in ids],
                              dtype=float).reshape(n, 2)
            weights = np.full(len(ppos), 0.0)
            for j in range(n):
                weights[offsets[j]:offsets[j + 1]] = 1.0 / counts[j]
            lost = np.zeros(n, dtype=np.bool_)
            runner.run(lambda lo, hi: kernels.reweight_range(new_pos, weights, offsets, obs_xy, observed,
                                                             float(cfg.noise.observation_sigma), lo, hi, lost), n)
            sums = np.add.reduceat(weights, offsets[:-1]) if n else np.zeros(0)
            if n:
                result.max_weight_error = max(result.max_weight_error, float(np.abs(sums - 1.0).max()))
            result.lost_events += int(lost.sum())

            est_pos = np.empty((n, 2))
            est_vel = np.empty((n, 2))
            runner.run(lambda lo, hi: kernels.estimate_range(new_pos, new_vel, weights, offsets, lo, hi,
                                                             est_pos, est_vel), n)
            speed = np.linalg.norm(est_vel, axis=1, keepdims=True)
            est_vel = np.where(speed > v_cap, est_vel * (v_cap / np.maximum(speed, 1e-300)), est_vel)

            # confidence from tracked-state drift and forecast residual
            wid, wpos, _, wpresent = window.to_arrays(ids)
            first = np.argmax(wpresent, axis=0)
            origin = wpos[first, np.arange(n)]
            elapsed = len(window) - first
            pr = propagation_reliability(np.linalg.norm(est_pos - prev_pos, axis=1),
                                         np.linalg.norm(est_pos - origin, axis=1), elapsed, v_cap, dt)
            pr = np.where(observed, pr, pr * cfg.occlusion_factor)
            residual = np.linalg.norm(est_pos - pred_pos, axis=1)
            mmr = motion_model_reliability(residual, cfg.d_max)
            combined = np.where(lost, 0.0, pr * mmr)
            if cfg.adaptive:
                new_counts = np.asarray(adapt_particle_count(combined, cfg.n_min, cfg.n_max),
                                        dtype=np.int64).reshape(n)
            else:
                new_counts = np.full(n, cfg.n_max, dtype=np.int64)

            new_offsets = np.concatenate([[0], np.cumsum(new_counts)]).astype(np.int64)
            index = np.empty(int(new_offsets[-1]), dtype=np.int64)
            runner.run(lambda lo, hi: kernels.systematic_range(weights, offsets, new_offsets, u0, lo, hi, index), n)

            for j, a in enumerate(ids):
                diag["frame"].append(f)
                diag["agent_id"].append(a)
                diag["model"].append(kinds[j].label)
                diag["particles"].append(int(counts[j]))
                diag["pr"].append(float(pr[j]))
                diag["mmr"].append(float(mmr[j]))
                diag["err"].append(float(residual[j]))

            ppos, pvel, counts = new_pos[index], new_vel[index], new_counts
            snap = {a: AgentState(est_pos[j], est_vel[j]) for j, a in enumerate(ids)}

            # agents first observed now start from their observation
            fresh = sorted(a for a in frame_obs if a not in tracked)
            if fresh:
                rng = np.random.default_rng([cfg.seed, f, -1])
                for a in fresh:
                    snap[a] = AgentState(np.asarray(frame_obs[a], dtype=float), np.zeros(2))
                bounds = np.concatenate([[0], np.cumsum(counts)])
                blocks = {a: (ppos[bounds[j]:bounds[j + 1]], pvel[bounds[j]:bounds[j + 1]])
                          for j, a in enumerate(ids)}
                for a in fresh:
                    p = np.tile(snap[a].position, (cfg.n_max, 1))
                    if cfg.noise.observation_sigma > 0:
                        p = p + rng.normal(0.0, cfg.noise.observation_sigma, p.shape)
                    blocks[a] = (p, np.zeros((cfg.n_max, 2)))
                ids = sorted(blocks)
                ppos = np.vstack([blocks[a][0] for a in ids])
                pvel = np.vstack([blocks[a][1] for a in ids])
                counts = np.array([len(blocks[a][0]) for a in ids], dtype=np.int64)

            tracked = snap
            push_state(window, snap, f * dt)
            out_rows.extend((f, a, s.position, s.velocity) for a, s in sorted(snap.items()))
            result.steps += 1
            if progress is not None:
                progress(f)
    finally:
        runner.close()

    result.wall_time = time.perf_counter() - start
    fr = [r[0] for r in out_rows]
    ag = [r[1] for r in out_rows]
    xy = np.array([r[2] for r in out_rows]).reshape(-1, 2)
    v = np.array([r[3] for r in out_rows]).reshape(-1, 2)
    result.estimates = TrajectoryDataset(fr, ag, xy[:, 0], xy[:, 1], v[:, 0], v[:, 1],
                                         frame_rate=1.0 / dt, source_tag="estimate").sorted()
    return result
