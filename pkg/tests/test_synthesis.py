import numpy as np
import pytest

from mixtrack.core import AgentState, DataError, Scenario
from mixtrack.models import ModelParams
from mixtrack.synthesis import ScenarioTemplate, corrupt, generate, simulate


def min_pair_distance(gt):
    best = np.inf
    for pts in gt.by_frame().values():
        p = np.array(list(pts.values()))
        d = np.linalg.norm(p[:, None] - p[None], axis=2) + np.eye(len(p)) * 1e9
        best = min(best, d.min())
    return best


def test_lin_straight_line():
    sc = Scenario(0.1, goals={0: [50, 0]})
    gt = simulate("lin", {0: AgentState.at(0, 0, 1, 0)}, sc, 10, ModelParams("lin", [0]))
    f, xy = gt.track(0)
    assert np.allclose(xy[:, 0], 0.1 * f) and np.allclose(xy[:, 1], 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_circle_swap_rvo_never_interpenetrates(seed):
    sc, gt, prov = generate(ScenarioTemplate("circle_swap", 8, "medium", rng_seed=seed), "rvo")
    radius = min(r["radius"] for r in prov["params"].values())
    assert min_pair_distance(gt) >= 2 * radius


def test_head_on_corridor_social_forces_reach_goals():
    sc, gt, _ = generate(ScenarioTemplate("head_on_corridor", 2, "medium", rng_seed=0), "sf")
    assert len(sc.obstacles) > 0
    last = gt.snapshot(int(gt.frames().max()))
    assert all(np.linalg.norm(last[a].position - sc.goals[a]) <= 0.5 for a in last)


@pytest.mark.parametrize("kind", ["crossing", "head_on_corridor", "circle_swap", "random_goals"])
def test_templates_start_without_overlap(kind):
    sc, gt, prov = generate(ScenarioTemplate(kind, 10, "high", rng_seed=3), "boids", frames=1)
    radius = max(r["radius"] for r in prov["params"].values())
    assert min_pair_distance(gt) > 2 * radius
    assert set(sc.goals) == set(range(10))


def test_generate_is_deterministic_and_records_provenance():
    t = ScenarioTemplate("random_goals", 6, "low", rng_seed=11)
    a = generate(t, "rvo", frames=30)
    b = generate(t, "rvo", frames=30)
    assert a[1].same_records(b[1]) and a[0].to_json() == b[0].to_json()
    assert a[2]["model"] == "rvo" and a[2]["seed"] == 11 and set(a[2]["params"]) == {str(i) for i in range(6)}


def test_params_outside_ranges_rejected():
    with pytest.raises(ValueError):
        generate(ScenarioTemplate("crossing", 1), "boids", ModelParams("boids", [0], [[5.0, 1.5]]))


def test_impossible_placement_raises():
    with pytest.raises(DataError):
        generate(ScenarioTemplate("random_goals", 200, "high", arena_size=40, rng_seed=0), "rvo",
                 ModelParams("rvo", range(200), [[1.5, 11, 0.8, 2, 2]] * 200), frames=1)


def test_template_validation():
    with pytest.raises(ValueError):
        ScenarioTemplate("crossing", 0)
    with pytest.raises(ValueError):
        ScenarioTemplate("spiral", 3)


def test_corrupt_identity():
    _, gt, _ = generate(ScenarioTemplate("crossing", 4, rng_seed=1), "rvo", frames=20)
    obs = corrupt(gt, 0.0, 0.0, rng_seed=5)
    assert np.array_equal(obs.x, gt.sorted().x) and np.array_equal(obs.y, gt.sorted().y)
    assert not obs.has_velocity and obs.source_tag == "observation"


def test_corrupt_noise_statistics():
    _, gt, _ = generate(ScenarioTemplate("random_goals", 50, rng_seed=2), "lin", frames=200)
    assert len(gt) == 10_000
    obs = corrupt(gt, 0.1, 0.0, rng_seed=3)
    d = np.concatenate([obs.x - gt.sorted().x, obs.y - gt.sorted().y])
    assert 0.095 <= d.std() <= 0.105


def test_corrupt_dropout_fraction():
    _, gt, _ = generate(ScenarioTemplate("random_goals", 50, rng_seed=2), "lin", frames=200)
    obs = corrupt(gt, 0.0, 0.2, rng_seed=4)
    n = len(gt)
    se = np.sqrt(0.8 * 0.2 / n)
    assert abs(len(obs) / n - 0.8) <= 3 * se


def test_corrupt_commutes_with_reordering():
    _, gt, _ = generate(ScenarioTemplate("crossing", 5, rng_seed=1), "sf", frames=15)
    perm = np.random.default_rng(0).permutation(len(gt))
    a = corrupt(gt, 0.1, 0.3, rng_seed=9)
    b = corrupt(gt.take(perm), 0.1, 0.3, rng_seed=9)
    assert a.same_records(b)


def test_corrupt_validation():
    _, gt, _ = generate(ScenarioTemplate("crossing", 2), "lin", frames=2)
    with pytest.raises(ValueError):
        corrupt(gt, -0.1)
    with pytest.raises(ValueError):
        corrupt(gt, 0.1, 1.0)
