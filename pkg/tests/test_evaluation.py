import math

import numpy as np
import pytest

from mixtrack.core import DataError, TrajectoryDataset
from mixtrack.evaluation import REPORT_KEYS, MatchConfig, clear_mot, evaluate, rms_error, success_and_switches


def ds(rows, tag="ground-truth"):
    f, a, x, y = zip(*rows)
    return TrajectoryDataset(f, a, x, y, source_tag=tag)


def walkers(n_agents=3, n_frames=10, offset=(0.0, 0.0), ids=None):
    ids = ids or list(range(n_agents))
    return ds([(f, ids[a], 0.1 * f + offset[0], 3.0 * a + offset[1]) for f in range(n_frames)
               for a in range(n_agents)])


def test_identity_tracking():
    gt = walkers()
    m = clear_mot(gt, gt)
    assert m.mota == 1.0 and m.motp == 0.0 and m.id_switches == 0


def test_one_miss_out_of_ten():
    gt = ds([(0, a, float(a) * 3, 0.0) for a in range(10)])
    est = ds([(0, a, float(a) * 3, 0.0) for a in range(9)], "estimate")
    m = clear_mot(gt, est)
    assert m.mota == pytest.approx(0.9, abs=1e-12)
    assert m.misses == 1 and m.false_positives == 0


def test_two_track_identity_swap():
    gt = ds([(f, a, 0.1 * f, 3.0 * a) for f in range(10) for a in (0, 1)])
    est = ds([(f, e, 0.1 * f, 3.0 * ((e + (f >= 5)) % 2)) for f in range(10) for e in (0, 1)], "estimate")
    m = clear_mot(gt, est)
    assert m.id_switches == 2
    assert m.mota == pytest.approx(1 - 2 / 20)


def test_hungarian_flag_agrees_on_simple_fixtures():
    gt = ds([(f, a, 0.1 * f, 3.0 * a) for f in range(10) for a in (0, 1)])
    est = ds([(f, e, 0.1 * f, 3.0 * ((e + (f >= 5)) % 2)) for f in range(10) for e in (0, 1)], "estimate")
    assert clear_mot(gt, est, MatchConfig(hungarian=True)).id_switches == 2


def test_mota_invariant_under_translation_and_motp_under_rotation():
    rng = np.random.default_rng(0)
    gt = walkers(4, 8)
    noise = rng.normal(0, 0.3, (len(gt), 2))
    est = TrajectoryDataset(gt.frame, gt.agent_id, gt.x + noise[:, 0], gt.y + noise[:, 1], source_tag="estimate")
    base = clear_mot(gt, est)
    c, s = math.cos(0.7), math.sin(0.7)

    def moved(d, rot=False):
        x, y = (c * d.x - s * d.y, s * d.x + c * d.y) if rot else (d.x, d.y)
        return TrajectoryDataset(d.frame, d.agent_id, x + 5.0, y - 2.0, source_tag=d.source_tag)

    assert clear_mot(moved(gt), moved(est)).mota == pytest.approx(base.mota)
    assert clear_mot(moved(gt, True), moved(est, True)).motp == pytest.approx(base.motp)


def test_false_positive_lowers_mota():
    gt = walkers()
    est = ds([(int(f), int(a), x, y) for f, a, x, y in zip(gt.frame, gt.agent_id, gt.x, gt.y)] + [(0, 99, 50.0, 50.0)],
             "estimate")
    assert clear_mot(gt, est).mota < 1.0


def test_empty_ground_truth_rejected():
    empty = TrajectoryDataset([], [], [], [])
    with pytest.raises(DataError):
        clear_mot(empty, walkers())


def test_frame_range_mismatch_rejected():
    est = walkers(n_frames=12)
    with pytest.raises(DataError):
        clear_mot(walkers(n_frames=10), est)


@pytest.mark.parametrize("offset,ok", [(0.5, 1), (1.0, 0), (0.8, 0)])
def test_success_threshold(offset, ok):
    gt = ds([(f, 0, 0.1 * f, 0.0) for f in range(10)])
    est = ds([(f, 0, 0.1 * f, offset) for f in range(10)], "estimate")
    st = success_and_switches(gt, est, MatchConfig(match_radius=2.0))
    assert st.successful == ok and st.tracks == 1


def test_unknown_estimate_ids_are_false_tracks():
    gt = walkers(2)
    est = walkers(3, ids=[0, 1, 7])
    assert success_and_switches(gt, est).false_tracks == [7]


def test_rms_error_values():
    gt = walkers()
    assert rms_error(gt, gt) == 0.0
    assert rms_error(gt, walkers(offset=(0.3, 0.4))) == pytest.approx(0.5, abs=1e-9)
    a = ds([(0, 0, 0.0, 0.0), (1, 0, 0.0, 0.0)])
    b = ds([(0, 0, 0.0, 0.0), (1, 0, 1.0, 0.0)])
    assert rms_error(a, b) == pytest.approx(math.sqrt(0.5))


def test_rms_needs_overlap():
    with pytest.raises(DataError):
        rms_error(ds([(0, 0, 0.0, 0.0)]), ds([(0, 1, 0.0, 0.0)]))


def test_rms_not_below_mean_error():
    rng = np.random.default_rng(1)
    gt = walkers(3, 20)
    e = rng.uniform(0, 0.5, len(gt))
    est = TrajectoryDataset(gt.frame, gt.agent_id, gt.x + e, gt.y, source_tag="estimate")
    assert rms_error(gt, est) >= e.mean()


def test_report_keys():
    gt = walkers()
    rep = evaluate(gt, gt)
    assert tuple(rep) == REPORT_KEYS
    assert rep["mota"] == 1.0
