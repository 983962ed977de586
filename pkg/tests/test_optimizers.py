import numpy as np
import pytest

from mixtrack.calibration import OptimizerSpec, SearchSpace, optimize, run_genetic, run_greedy, \
    run_simulated_annealing
from mixtrack.models import ModelKind


def sphere(center):
    center = np.asarray(center, dtype=float)
    return lambda rows: np.sum((np.atleast_2d(rows) - center) ** 2, axis=1)


def box(d):
    return SearchSpace(np.zeros(d), np.ones(d))


class Counter:
    def __init__(self, fn):
        self.fn, self.calls = fn, 0

    def __call__(self, rows):
        rows = np.atleast_2d(rows)
        self.calls += len(rows)
        return self.fn(rows)


def test_spec_validation():
    with pytest.raises(ValueError):
        OptimizerSpec(budget=0)
    with pytest.raises(ValueError):
        OptimizerSpec(pool_size=2)
    with pytest.raises(ValueError):
        OptimizerSpec(group_probs=((1.5, 0, 0), (0, 0, 0), (0, 0, 0)))
    with pytest.raises(ValueError):
        OptimizerSpec(method="newton")
    assert OptimizerSpec(method="SA").method == "annealing"


def test_model_space_uses_table_ranges():
    s = SearchSpace.for_model(ModelKind.RVO, 2)
    assert s.dim == 10
    assert np.allclose(s.mean[:5], [1.5, 11.0, 0.5, 2.0, 2.0])
    x = s.random(np.random.default_rng(0), 200)
    assert np.all(x >= s.lo) and np.all(x <= s.hi)


def test_sa_constant_cost_stops_after_k_iterations():
    space = box(4)
    res = run_simulated_annealing(lambda r: np.ones(len(np.atleast_2d(r))), space, OptimizerSpec(budget=7))
    assert res.iterations == 7
    assert np.array_equal(res.x, space.mean)
    assert res.evaluations == 8


def test_sa_k1_single_non_improving_step():
    space = box(3)
    res = run_simulated_annealing(sphere([0.5, 0.5, 0.5]), space, OptimizerSpec(budget=1, seed=3))
    assert res.iterations == 1


def test_sa_always_accepts_improvements():
    from mixtrack.calibration.optimizers import _move

    rng = np.random.default_rng(0)
    assert all(_move(1.0, 0.5, 1e-300, rng) for _ in range(100))


@pytest.mark.xfail(strict=True, reason="temperature (K-k)/K is in absolute cost units; on a unit-scale cost "
                                       "annealing accepts most uphill moves and stops after ~100 evaluations")
def test_sa_beats_random_search():
    c = np.random.default_rng(42).random(10)
    cost = sphere(c)
    space = box(10)
    sa, rs = [], []
    for seed in range(10):
        sa.append(run_simulated_annealing(cost, space, OptimizerSpec(budget=50, seed=seed)).cost)
        rs.append(cost(space.random(np.random.default_rng(1000 + seed), 500)).min())
    assert np.median(sa) <= np.median(rs)


def test_greedy_single_iteration_returns_better_of_two():
    space = box(2)
    cost = Counter(sphere([0.9, 0.1]))
    res = run_greedy(cost, space, OptimizerSpec(budget=1, seed=5))
    assert cost.calls == 2 == res.evaluations
    assert res.cost <= cost(space.mean)[0]


def test_greedy_is_seed_deterministic():
    space = box(5)
    a = run_greedy(sphere(np.full(5, 0.2)), space, OptimizerSpec(budget=30, seed=9))
    b = run_greedy(sphere(np.full(5, 0.2)), space, OptimizerSpec(budget=30, seed=9))
    assert np.array_equal(a.x, b.x) and a.cost == b.cost


def test_greedy_monotone_on_one_parameter():
    res = run_greedy(lambda r: np.atleast_2d(r)[:, 0], box(1), OptimizerSpec(budget=40, seed=1))
    assert np.all(np.diff(res.history) <= 0)


@pytest.mark.parametrize("method", ["greedy", "annealing", "genetic"])
def test_best_ever_monotone_and_budget_accounting(method):
    cost = Counter(sphere(np.full(6, 0.3)))
    res = optimize(cost, box(6), OptimizerSpec(method=method, budget=10, seed=2))
    assert np.all(np.diff(res.history) <= 0)
    assert res.evaluations == cost.calls


@pytest.mark.parametrize("method", ["greedy", "annealing", "genetic"])
def test_max_evaluations_is_respected(method):
    cost = Counter(sphere(np.full(6, 0.3)))
    optimize(cost, box(6), OptimizerSpec(method=method, budget=1000, seed=2, max_evaluations=45))
    assert cost.calls <= 45


def test_ga_frozen_pool_when_alpha_zero():
    space = box(3)
    spec = OptimizerSpec(budget=6, seed=4, pool_size=9, group_probs=((0, 0.5, 0.5),) * 3)
    cost = Counter(sphere([0.1, 0.2, 0.3]))
    res = run_genetic(cost, space, spec)
    pool = space.random(np.random.default_rng(4), 9)
    pool[0] = space.mean
    assert cost.calls == 9
    assert res.iterations == 6
    assert res.cost == pytest.approx(cost(pool).min())


def test_ga_pool_of_three_never_loses_optimum():
    space = box(2)
    res = run_genetic(sphere(space.mean), space, OptimizerSpec(budget=15, seed=0, pool_size=3))
    assert res.cost == 0.0
    assert all(h == 0.0 for h in res.history)


def test_ga_warm_start_seed_enters_pool():
    space = box(2)
    res = run_genetic(sphere([0.9, 0.9]), space, OptimizerSpec(budget=1, seed=0), seeds=[[0.9, 0.9]])
    assert res.cost == 0.0


def test_ga_not_worse_than_sa_at_equal_evaluations():
    center = np.random.default_rng(7).random(6)
    ga_cost, sa_cost = [], []
    for seed in range(10):
        ga = run_genetic(sphere(center), box(6), OptimizerSpec(budget=25, seed=seed, pool_size=30))
        sa = run_simulated_annealing(sphere(center), box(6),
                                     OptimizerSpec(budget=10 ** 6, seed=seed, max_evaluations=ga.evaluations))
        ga_cost.append(ga.cost)
        sa_cost.append(sa.cost)
    assert np.median(ga_cost) <= np.median(sa_cost)
