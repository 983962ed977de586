"""Tracking accuracy against ground truth: CLEAR MOT, successful tracks,
identity switches and RMS position error."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import DataError, TrajectoryDataset

REPORT_KEYS = (
    "mota", "motp", "misses", "false_positives", "id_switches", "matches", "gt_objects",
    "successful_tracks", "tracks", "success_rate", "false_tracks", "rms",
)


@dataclass(frozen=True)
class MatchConfig:
    match_radius: float = 1.0
    success_threshold: float = 0.8
    hungarian: bool = False

    def __post_init__(self):
        if not (self.match_radius > 0 and self.success_threshold > 0):
            raise ValueError("match_radius and success_threshold must be > 0")


@dataclass
class MotScore:
    mota: float
    motp: float
    misses: int
    false_positives: int
    id_switches: int
    matches: int
    gt_objects: int


@dataclass
class TrackSuccess:
    successful: int
    tracks: int
    id_switches: int
    false_tracks: list[int] = field(default_factory=list)
    mean_error: dict[int, float] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.successful / self.tracks if self.tracks else 0.0


def _check_frames(gt: TrajectoryDataset, est: TrajectoryDataset):
    if not len(gt):
        raise DataError("empty ground truth")
    if len(est):
        lo, hi = int(gt.frame.min()), int(gt.frame.max())
        if int(est.frame.min()) < lo or int(est.frame.max()) > hi:
            raise DataError(f"estimate frames {int(est.frame.min())}..{int(est.frame.max())} "
                            f"outside ground-truth range {lo}..{hi}")


def _associate(gt_ids, gt_xy, est_ids, est_xy, prev, gate, hungarian):
    """Frame association: keep still-valid previous pairs, then match the rest."""
    pairs: dict[int, tuple[int, float]] = {}
    gi = {g: i for i, g in enumerate(gt_ids)}
    ei = {e: j for j, e in enumerate(est_ids)}
    used = set()
    for g, e in prev.items():
        if g in gi and e in ei and e not in used:
            d = math.dist(gt_xy[gi[g]], est_xy[ei[e]])
            if d <= gate:
                pairs[g] = (e, d)
                used.add(e)
    free_g = [g for g in gt_ids if g not in pairs]
    free_e = [e for e in est_ids if e not in used]
    if not free_g or not free_e:
        return pairs
    a = np.array([gt_xy[gi[g]] for g in free_g])
    b = np.array([est_xy[ei[e]] for e in free_e])
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    if hungarian:
        cost = np.where(dist <= gate, dist, gate * 1e6)
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            if dist[r, c] <= gate:
                pairs[free_g[r]] = (free_e[c], float(dist[r, c]))
        return pairs
    cand = [(dist[r, c], free_g[r], free_e[c], r, c) for r, c in zip(*np.nonzero(dist <= gate))]
    taken_g, taken_e = set(), set()
    for d, g, e, _, _ in sorted(cand):
        if g not in taken_g and e not in taken_e:
            pairs[g] = (e, float(d))
            taken_g.add(g)
            taken_e.add(e)
    return pairs


def _frames(ds: TrajectoryDataset):
    out: dict[int, tuple[list[int], list[np.ndarray]]] = {}
    for f, a, xy in zip(ds.frame.tolist(), ds.agent_id.tolist(), np.column_stack([ds.x, ds.y])):
        ids, pts = out.setdefault(f, ([], []))
        ids.append(a)
        pts.append(xy)
    return out


def clear_mot(gt: TrajectoryDataset, est: TrajectoryDataset, cfg: MatchConfig | None = None) -> MotScore:
    """CLEAR MOT accuracy and precision.

    MOTA = 1 - (misses + false positives + identity switches) / ground-truth
    object-frames; MOTP is the mean distance of matched pairs.
    """
    cfg = cfg or MatchConfig()
    _check_frames(gt, est)
    g_frames, e_frames = _frames(gt), _frames(est)
    prev: dict[int, int] = {}
    last: dict[int, int] = {}
    misses = fps = switches = matches = total = 0
    dist_sum = 0.0
    for f in sorted(set(g_frames) | set(e_frames)):
        g_ids, g_xy = g_frames.get(f, ([], []))
        e_ids, e_xy = e_frames.get(f, ([], []))
        pairs = _associate(g_ids, g_xy, e_ids, e_xy, prev, cfg.match_radius, cfg.hungarian)
        for g, (e, d) in pairs.items():
            if g in last and last[g] != e:
                switches += 1
            last[g] = e
            dist_sum += d
        total += len(g_ids)
        matches += len(pairs)
        misses += len(g_ids) - len(pairs)
        fps += len(e_ids) - len(pairs)
        prev = {g: e for g, (e, _) in pairs.items()}
    mota = 1.0 - (misses + fps + switches) / total
    motp = dist_sum / matches if matches else float("nan")
    return MotScore(mota, motp, misses, fps, switches, matches, total)


def _paired(gt: TrajectoryDataset, est: TrajectoryDataset):
    g = gt.positions()
    e = est.positions()
    keys = sorted(set(g) & set(e))
    if not keys:
        raise DataError("ground truth and estimates share no (frame, agent) records")
    err = np.array([math.dist(g[k], e[k]) for k in keys])
    return keys, err


def success_and_switches(gt: TrajectoryDataset, est: TrajectoryDataset,
                         cfg: MatchConfig | None = None) -> TrackSuccess:
    """Tracks paired by agent id are successful when their mean error is
    strictly below the threshold. Estimated ids absent from the ground truth
    are reported as false tracks."""
    cfg = cfg or MatchConfig()
    mot = clear_mot(gt, est, cfg)
    g = gt.positions()
    e = est.positions()
    sums: dict[int, list[float]] = {}
    for (f, a), xy in g.items():
        if (f, a) in e:
            sums.setdefault(a, []).append(math.dist(xy, e[(f, a)]))
    mean_error = {int(a): (float(np.mean(sums[a])) if a in sums else float("inf")) for a in gt.agents().tolist()}
    ok = sum(1 for v in mean_error.values() if v < cfg.success_threshold)
    false_tracks = sorted(set(est.agents().tolist()) - set(gt.agents().tolist()))
    return TrackSuccess(ok, len(mean_error), mot.id_switches, false_tracks, mean_error)


def rms_error(gt: TrajectoryDataset, est: TrajectoryDataset) -> float:
    """Root mean squared position error over the (frame, agent) records both share."""
    _, err = _paired(gt, est)
    return float(np.sqrt(np.mean(err ** 2)))


def evaluate(gt: TrajectoryDataset, est: TrajectoryDataset, cfg: MatchConfig | None = None) -> dict:
    """Full report with exactly the keys in ``REPORT_KEYS``."""
    cfg = cfg or MatchConfig()
    mot = clear_mot(gt, est, cfg)
    st = success_and_switches(gt, est, cfg)
    report = asdict(mot)
    report.update(successful_tracks=st.successful, tracks=st.tracks, success_rate=st.rate,
                  false_tracks=len(st.false_tracks), rms=rms_error(gt, est))
    return {k: report[k] for k in REPORT_KEYS}
