import numpy as np
import pytest

from mixtrack.core import DataError, TrajectoryDataset
from mixtrack.models import ModelKind
from mixtrack.synthesis import ScenarioTemplate, corrupt, generate
from mixtrack.tracking import NoiseModel, TrackerConfig, track


def case(model="rvo", agents=8, frames=40, sigma=0.1, seed=0, density="medium"):
    sc, gt, _ = generate(ScenarioTemplate("random_goals", agents, density, rng_seed=seed), model, frames=frames)
    return sc, gt, corrupt(gt, sigma, 0.0, rng_seed=seed + 1)


def per_frame_error(gt, est):
    g = gt.sorted()
    e = est.sorted()
    assert np.array_equal(g.frame, e.frame) and np.array_equal(g.agent_id, e.agent_id)
    return np.hypot(g.x - e.x, g.y - e.y)


@pytest.mark.parametrize("forced", [ModelKind.LIN, None])
def test_zero_noise_lin_tracking_is_exact(forced):
    sc, gt, obs = case("lin", agents=6, frames=40, sigma=0.0)
    res = track(obs, sc, TrackerConfig(noise=NoiseModel(0.0, 0.0), forced_model=forced))
    assert per_frame_error(gt, res.estimates).max() <= 1e-3


def test_estimate_approaches_observation_as_its_noise_vanishes():
    sc, gt, obs = case("rvo", agents=6, frames=30, sigma=0.0)
    errs = [per_frame_error(gt, track(obs, sc, TrackerConfig(noise=NoiseModel(0.05, s))).estimates).mean()
            for s in (0.2, 0.05, 0.0)]
    assert errs[0] > errs[1] > errs[2]


def test_weights_stay_normalized():
    sc, gt, obs = case(agents=10, frames=60)
    res = track(obs, sc, TrackerConfig())
    assert res.max_weight_error <= 1e-9
    assert res.steps == 60 - 10


def test_particle_counts_within_bounds():
    sc, gt, obs = case(agents=10, frames=40)
    res = track(obs, sc, TrackerConfig(n_min=15, n_max=90))
    p = np.array(res.diagnostics["particles"])
    assert p.min() >= 15 and p.max() <= 90


def test_adaptive_off_uses_n_max():
    sc, gt, obs = case(agents=5, frames=25)
    res = track(obs, sc, TrackerConfig(adaptive=False))
    assert set(res.diagnostics["particles"]) == {200}


def test_thread_count_does_not_change_estimates():
    sc, gt, obs = case(agents=10, frames=30)
    a = track(obs, sc, TrackerConfig(seed=3, threads=1))
    b = track(obs, sc, TrackerConfig(seed=3, threads=4))
    assert a.estimates.same_records(b.estimates)
    assert a.diagnostics == b.diagnostics


def test_forced_model_reported_in_diagnostics():
    sc, gt, obs = case(agents=5, frames=25)
    res = track(obs, sc, TrackerConfig(forced_model="boids"))
    assert set(res.diagnostics["model"]) == {"boids"}
    assert res.model_frequency()["boids"] == 1.0


def test_occlusion_dips_confidence_and_tracking_resumes():
    sc, gt, obs = case(agents=6, frames=60, seed=2)
    gap = range(30, 35)
    keep = ~((obs.agent_id == 2) & np.isin(obs.frame, list(gap)))
    occluded = obs.take(np.flatnonzero(keep))
    res = track(occluded, sc, TrackerConfig(seed=1))
    full = track(obs, sc, TrackerConfig(seed=1))

    def gap_confidence(r):
        d = {c: np.array(v) for c, v in r.diagnostics.items()}
        m = (d["agent_id"] == 2) & np.isin(d["frame"], list(gap))
        return (d["pr"] * d["mmr"])[m].mean()

    assert gap_confidence(res) < gap_confidence(full)
    err = per_frame_error(gt, res.estimates)
    est = res.estimates.sorted()
    assert err[(est.agent_id == 2) & (est.frame >= 40)].max() < 0.8


def test_too_few_frames_rejected():
    sc, gt, obs = case(agents=3, frames=10)
    with pytest.raises(DataError):
        track(obs, sc, TrackerConfig(k=10))
    with pytest.raises(DataError):
        track(TrajectoryDataset([], [], [], []), sc)


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(n_min=0)
    with pytest.raises(ValueError):
        TrackerConfig(mode="both")
    with pytest.raises(ValueError):
        TrackerConfig(threads=0)
