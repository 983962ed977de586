"""Domain types shared by every module: agent states, the sliding state
window, scenarios and trajectory files."""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

DEFAULT_K = 10
DEFAULT_V_CAP = 5.0

SOURCE_TAGS = ("ground-truth", "observation", "estimate")


class ProtocolError(ValueError):
    """A caller broke an ordering or shape precondition."""


class DataError(ValueError):
    """Input data is malformed or inconsistent."""


@dataclass(frozen=True, eq=False)
class AgentState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        vel = np.asarray(self.velocity, dtype=float).reshape(2)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise DataError(f"non-finite agent state {pos}, {vel}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)

    @classmethod
    def at(cls, x: float, y: float, vx: float = 0.0, vy: float = 0.0) -> "AgentState":
        return cls(np.array([x, y]), np.array([vx, vy]))

    @property
    def speed(self) -> float:
        return float(math.hypot(*self.velocity))

    def capped(self, v_cap: float = DEFAULT_V_CAP) -> "AgentState":
        s = self.speed
        if s <= v_cap:
            return self
        return AgentState(self.position, self.velocity * (v_cap / s))

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        return bool(np.array_equal(self.position, other.position)
                    and np.array_equal(self.velocity, other.velocity))

    def __repr__(self):
        p, v = self.position, self.velocity
        return f"AgentState(pos=({p[0]:.4g}, {p[1]:.4g}), vel=({v[0]:.4g}, {v[1]:.4g}))"


Snapshot = Mapping[int, AgentState]


def states_to_arrays(states: Snapshot, order: Iterable[int] | None = None):
    """Pack a snapshot into (ids, pos (n,2), vel (n,2))."""
    ids = list(order) if order is not None else sorted(states)
    pos = np.array([states[a].position for a in ids], dtype=float).reshape(len(ids), 2)
    vel = np.array([states[a].velocity for a in ids], dtype=float).reshape(len(ids), 2)
    return ids, pos, vel


def arrays_to_states(ids, pos, vel) -> dict[int, AgentState]:
    return {a: AgentState(pos[i].copy(), vel[i].copy()) for i, a in enumerate(ids)}


class StateHistory:
    """The last k+1 per-agent snapshots ("k-states").

    Agents missing from a snapshot are treated as absent for that timestep;
    :meth:`presence` reports entry/exit explicitly.
    """

    def __init__(self, k: int = DEFAULT_K, dt: float = 0.04):
        if k < 1:
            raise ValueError("k must be >= 1")
        if dt <= 0:
            raise ValueError("dt must be > 0")
        self.k = int(k)
        self.dt = float(dt)
        self._window: deque[tuple[float, dict[int, AgentState]]] = deque(maxlen=self.k + 1)

    @property
    def capacity(self) -> int:
        return self.k + 1

    def __len__(self):
        return len(self._window)

    @property
    def timestamps(self) -> list[float]:
        return [ts for ts, _ in self._window]

    @property
    def snapshots(self) -> list[dict[int, AgentState]]:
        return [dict(s) for _, s in self._window]

    @property
    def newest(self) -> dict[int, AgentState]:
        return dict(self._window[-1][1])

    @property
    def oldest(self) -> dict[int, AgentState]:
        return dict(self._window[0][1])

    def agent_ids(self) -> list[int]:
        ids: set[int] = set()
        for _, snap in self._window:
            ids.update(snap)
        return sorted(ids)

    def presence(self, order: Iterable[int] | None = None) -> np.ndarray:
        ids = list(order) if order is not None else self.agent_ids()
        return np.array([[a in snap for a in ids] for _, snap in self._window], dtype=bool)

    def to_arrays(self, order: Iterable[int] | None = None):
        """Return (ids, pos (T,n,2), vel (T,n,2), present (T,n)); absent entries are NaN."""
        ids = list(order) if order is not None else self.agent_ids()
        T, n = len(self._window), len(ids)
        pos = np.full((T, n, 2), np.nan)
        vel = np.full((T, n, 2), np.nan)
        for t, (_, snap) in enumerate(self._window):
            for j, a in enumerate(ids):
                st = snap.get(a)
                if st is not None:
                    pos[t, j] = st.position
                    vel[t, j] = st.velocity
        return ids, pos, vel, ~np.isnan(pos[..., 0])

    def copy(self) -> "StateHistory":
        out = StateHistory(self.k, self.dt)
        out._window.extend((ts, dict(s)) for ts, s in self._window)
        return out

    def _push(self, snapshot: Snapshot, timestamp: float | None) -> None:
        if self._window:
            expected = self._window[-1][0] + self.dt
            if timestamp is None:
                timestamp = expected
            elif abs(timestamp - expected) > 1e-9 * max(1.0, abs(expected)):
                raise ProtocolError(
                    f"snapshot timestamp {timestamp} does not follow {self._window[-1][0]} by dt={self.dt}")
        elif timestamp is None:
            timestamp = 0.0
        self._window.append((float(timestamp), dict(snapshot)))


def push_state(history: StateHistory, snapshot: Snapshot, timestamp: float | None = None) -> StateHistory:
    """Append a snapshot, evicting the oldest one when the window is full."""
    history._push(snapshot, timestamp)
    return history


@dataclass
class Scenario:
    dt: float
    bounds: tuple[float, float, float, float] = (-50.0, -50.0, 50.0, 50.0)
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    goals: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise DataError("scenario dt must be > 0")
        self.bounds = tuple(float(b) for b in self.bounds)
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise DataError(f"degenerate bounds {self.bounds}")
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 4)
        if obs.size:
            xs, ys = obs[:, [0, 2]], obs[:, [1, 3]]
            eps = 1e-9
            if xs.min() < x0 - eps or xs.max() > x1 + eps or ys.min() < y0 - eps or ys.max() > y1 + eps:
                raise DataError("obstacle endpoint outside scenario bounds")
        self.obstacles = obs
        self.goals = {int(a): np.asarray(g, dtype=float).reshape(2) for a, g in self.goals.items()}

    def goals_for(self, ids: Iterable[int]) -> np.ndarray:
        missing = [a for a in ids if a not in self.goals]
        if missing:
            raise DataError(f"no goal for agent(s) {missing}")
        return np.array([self.goals[a] for a in ids], dtype=float).reshape(-1, 2)

    def to_json(self) -> dict:
        return {
            "dt": self.dt,
            "bounds": list(self.bounds),
            "obstacles": [list(map(float, s)) for s in self.obstacles],
            "goals": {str(a): [float(g[0]), float(g[1])] for a, g in sorted(self.goals.items())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Scenario":
        try:
            return cls(
                dt=float(doc["dt"]),
                bounds=tuple(doc.get("bounds", (-50.0, -50.0, 50.0, 50.0))),
                obstacles=np.array(doc.get("obstacles", []), dtype=float).reshape(-1, 4),
                goals={int(a): g for a, g in doc.get("goals", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad scenario document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: {exc}") from exc
        return cls.from_json(doc)


class TrajectoryDataset:
    """Flat (frame, agent_id, x, y[, vx, vy]) records in ground-space meters."""

    def __init__(self, frame, agent_id, x, y, vx=None, vy=None,
                 frame_rate: float = 25.0, source_tag: str = "ground-truth"):
        if source_tag not in SOURCE_TAGS:
            raise ValueError(f"unknown source tag {source_tag!r}")
        self.frame = np.asarray(frame, dtype=np.int64).reshape(-1)
        self.agent_id = np.asarray(agent_id, dtype=np.int64).reshape(-1)
        self.x = np.asarray(x, dtype=float).reshape(-1)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        n = len(self.frame)
        if not (len(self.agent_id) == len(self.x) == len(self.y) == n):
            raise DataError("column length mismatch")
        if (vx is None) != (vy is None):
            raise DataError("vx and vy must be given together")
        self.vx = None if vx is None else np.asarray(vx, dtype=float).reshape(-1)
        self.vy = None if vy is None else np.asarray(vy, dtype=float).reshape(-1)
        self.frame_rate = float(frame_rate)
        self.source_tag = source_tag
        if n and self.frame.min() < 0:
            raise DataError("negative frame index")
        keys = self.frame * (1 << 32) + self.agent_id
        if len(np.unique(keys)) != n:
            raise DataError("duplicate (frame, agent_id) record")

    def __len__(self):
        return len(self.frame)

    @property
    def has_velocity(self) -> bool:
        return self.vx is not None

    def frames(self) -> np.ndarray:
        return np.unique(self.frame)

    def agents(self) -> np.ndarray:
        return np.unique(self.agent_id)

    def sorted(self) -> "TrajectoryDataset":
        order = np.lexsort((self.agent_id, self.frame))
        return self.take(order)

    def take(self, idx) -> "TrajectoryDataset":
        return TrajectoryDataset(
            self.frame[idx], self.agent_id[idx], self.x[idx], self.y[idx],
            None if self.vx is None else self.vx[idx],
            None if self.vy is None else self.vy[idx],
            self.frame_rate, self.source_tag)

    def is_contiguous(self) -> bool:
        for a in self.agents():
            f = np.sort(self.frame[self.agent_id == a])
            if len(f) and f[-1] - f[0] + 1 != len(f):
                return False
        return True

    def positions(self) -> dict[tuple[int, int], np.ndarray]:
        return {(int(f), int(a)): np.array([x, y])
                for f, a, x, y in zip(self.frame, self.agent_id, self.x, self.y)}

    def by_frame(self) -> dict[int, dict[int, np.ndarray]]:
        out: dict[int, dict[int, np.ndarray]] = {}
        for f, a, x, y in zip(self.frame.tolist(), self.agent_id.tolist(), self.x.tolist(), self.y.tolist()):
            out.setdefault(f, {})[a] = np.array([x, y])
        return out

    def track(self, agent_id: int):
        """(frames, xy (m,2)) of one agent, sorted by frame."""
        m = self.agent_id == agent_id
        order = np.argsort(self.frame[m], kind="stable")
        return self.frame[m][order], np.column_stack([self.x[m], self.y[m]])[order]

    def snapshot(self, frame: int, velocities: Mapping | None = None) -> dict[int, AgentState]:
        m = self.frame == frame
        out = {}
        for i in np.flatnonzero(m):
            a = int(self.agent_id[i])
            if velocities is not None:
                v = velocities[(int(frame), a)]
            elif self.vx is not None:
                v = (self.vx[i], self.vy[i])
            else:
                v = (0.0, 0.0)
            out[a] = AgentState(np.array([self.x[i], self.y[i]]), np.asarray(v, dtype=float))
        return out

    def same_records(self, other: "TrajectoryDataset") -> bool:
        a, b = self.sorted(), other.sorted()
        cols = ["frame", "agent_id", "x", "y"]
        if a.has_velocity or b.has_velocity:
            cols += ["vx", "vy"]
        for c in cols:
            ca, cb = getattr(a, c), getattr(b, c)
            if ca is None or cb is None or not np.array_equal(ca, cb):
                return False
        return True

    def write_csv(self, path) -> None:
        data = self.sorted()
        header = ["frame", "agent_id", "x", "y"] + (["vx", "vy"] if data.has_velocity else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(len(data)):
                row = [int(data.frame[i]), int(data.agent_id[i]), repr(float(data.x[i])), repr(float(data.y[i]))]
                if data.has_velocity:
                    row += [repr(float(data.vx[i])), repr(float(data.vy[i]))]
                w.writerow(row)

    @classmethod
    def read_csv(cls, path, frame_rate: float = 25.0, source_tag: str = "observation") -> "TrajectoryDataset":
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                fields = reader.fieldnames or []
                if fields[:4] != ["frame", "agent_id", "x", "y"]:
                    raise DataError(f"{path}: header must start with frame,agent_id,x,y")
                rows = list(reader)
        except OSError as exc:
            raise DataError(str(exc)) from exc
        has_v = "vx" in fields and "vy" in fields
        try:
            frame = [int(r["frame"]) for r in rows]
            aid = [int(r["agent_id"]) for r in rows]
            x = [float(r["x"]) for r in rows]
            y = [float(r["y"]) for r in rows]
            vx = [float(r["vx"]) for r in rows] if has_v else None
            vy = [float(r["vy"]) for r in rows] if has_v else None
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: {exc}") from exc
        return cls(frame, aid, x, y, vx, vy, frame_rate=frame_rate, source_tag=source_tag)


def finite_difference_velocities(dataset: TrajectoryDataset):
    """Backward-difference velocities per (frame, agent).

    The first frame of a track copies the second frame's velocity. Gaps in a
    track divide by the number of elapsed frames. Returns ``(velocities,
    warnings)`` where ``warnings`` lists single-frame agents (given zero velocity).
    """
    vel: dict[tuple[int, int], np.ndarray] = {}
    warnings: list[int] = []
    for a in dataset.agents().tolist():
        frames, xy = dataset.track(a)
        if len(frames) == 1:
            vel[(int(frames[0]), a)] = np.zeros(2)
            warnings.append(a)
            continue
        gaps = np.diff(frames).astype(float)
        v = (xy[1:] - xy[:-1]) * (dataset.frame_rate / gaps)[:, None]
        vel[(int(frames[0]), a)] = v[0].copy()
        for f, vi in zip(frames[1:].tolist(), v):
            vel[(f, a)] = vi
    return vel, warnings


def dataset_from_states(frames: Iterable[tuple[int, Mapping[int, AgentState]]], frame_rate: float,
                        source_tag: str = "ground-truth", with_velocity: bool = True) -> TrajectoryDataset:
    f, a, x, y, vx, vy = [], [], [], [], [], []
    for fi, snap in frames:
        for aid in sorted(snap):
            st = snap[aid]
            f.append(fi)
            a.append(aid)
            x.append(st.position[0])
            y.append(st.position[1])
            vx.append(st.velocity[0])
            vy.append(st.velocity[1])
    if with_velocity:
        return TrajectoryDataset(f, a, x, y, vx, vy, frame_rate=frame_rate, source_tag=source_tag)
    return TrajectoryDataset(f, a, x, y, frame_rate=frame_rate, source_tag=source_tag)
