"""Derivative-free optimizers over boxed parameter vectors.

All three share one calling convention: ``cost`` maps a 2-D array of
candidates (rows) to a 1-D array of costs, so a whole GA generation is
evaluated in one call. Every optimizer tracks the best-ever candidate and
reports the best-ever cost after each iteration in ``history``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..models.params import COMFORT_SPEED_MEAN, COMFORT_SPEED_SD, PARAM_TABLE, ModelKind, n_params

METHODS = ("greedy", "annealing", "genetic")
_METHOD_ALIASES = {
    "greedy": "greedy",
    "sa": "annealing", "annealing": "annealing", "simulated_annealing": "annealing",
    "simulatedannealing": "annealing",
    "ga": "genetic", "genetic": "genetic",
}


@dataclass(frozen=True)
class OptimizerSpec:
    method: str = "genetic"
    budget: int = 20  # K: stagnant iterations (generations for the GA) before stopping
    seed: int | Sequence[int] = 0
    pool_size: int = 30
    group_fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    # (alpha, beta, gamma) for the Best, Middle and Worst groups
    group_probs: tuple[tuple[float, float, float], ...] = ((0.1, 0.5, 0.5), (0.4, 0.5, 0.5), (0.8, 0.5, 0.5))
    max_evaluations: int | None = None

    def __post_init__(self):
        method = _METHOD_ALIASES.get(str(self.method).lower().replace("-", "_"))
        if method is None:
            raise ValueError(f"unknown optimizer {self.method!r}")
        object.__setattr__(self, "method", method)
        if self.budget < 1:
            raise ValueError("budget K must be >= 1")
        if self.pool_size < 3:
            raise ValueError("GA pool size must be >= 3")
        fr = tuple(float(f) for f in self.group_fractions)
        if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-6:
            raise ValueError("group fractions must be three non-negative values summing to 1")
        object.__setattr__(self, "group_fractions", fr)
        probs = tuple(tuple(float(p) for p in g) for g in self.group_probs)
        if len(probs) != 3 or any(len(g) != 3 for g in probs):
            raise ValueError("group_probs needs (alpha, beta, gamma) for three groups")
        if any(not 0.0 <= p <= 1.0 for g in probs for p in g):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "group_probs", probs)
        if self.max_evaluations is not None and self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")

    def with_seed(self, seed) -> "OptimizerSpec":
        return replace(self, seed=seed)

    def to_json(self) -> dict:
        return {
            "method": self.method, "budget": self.budget,
            "seed": list(self.seed) if isinstance(self.seed, (list, tuple)) else self.seed,
            "pool_size": self.pool_size, "group_fractions": list(self.group_fractions),
            "group_probs": [list(g) for g in self.group_probs], "max_evaluations": self.max_evaluations,
        }

    @classmethod
    def from_json(cls, doc: dict | None) -> "OptimizerSpec":
        doc = dict(doc or {})
        if "group_fractions" in doc:
            doc["group_fractions"] = tuple(doc["group_fractions"])
        if "group_probs" in doc:
            doc["group_probs"] = tuple(tuple(g) for g in doc["group_probs"])
        if isinstance(doc.get("seed"), list):
            doc["seed"] = tuple(doc["seed"])
        return cls(**doc)


class SearchSpace:
    """Box [lo, hi] with a base distribution per dimension.

    Dimensions listed in ``normal`` draw from a normal law truncated to the
    box; all others draw uniformly.
    """

    def __init__(self, lo, hi, mean=None, normal: dict[int, tuple[float, float]] | None = None):
        self.lo = np.asarray(lo, dtype=float).reshape(-1)
        self.hi = np.asarray(hi, dtype=float).reshape(-1)
        if self.lo.shape != self.hi.shape or np.any(self.hi < self.lo):
            raise ValueError("bad bounds")
        self.mean = 0.5 * (self.lo + self.hi) if mean is None else np.asarray(mean, dtype=float).reshape(-1)
        self.normal_mu = np.full(self.dim, np.nan)
        self.normal_sd = np.full(self.dim, np.nan)
        for j, (mu, sd) in (normal or {}).items():
            self.normal_mu[j] = mu
            self.normal_sd[j] = sd

    @property
    def dim(self) -> int:
        return len(self.lo)

    @classmethod
    def for_model(cls, kind: ModelKind, n_agents: int) -> "SearchSpace":
        rows = PARAM_TABLE[kind]
        lo = np.tile([r.lo for r in rows], n_agents)
        hi = np.tile([r.hi for r in rows], n_agents)
        mean = np.tile([r.mean for r in rows], n_agents)
        normal = {}
        p = n_params(kind)
        for c, r in enumerate(rows):
            if r.name == "comfort_speed":
                for a in range(n_agents):
                    normal[a * p + c] = (COMFORT_SPEED_MEAN, COMFORT_SPEED_SD)
        return cls(lo, hi, mean, normal)

    def sample(self, rng: np.random.Generator, dims) -> np.ndarray:
        dims = np.asarray(dims, dtype=np.int64).reshape(-1)
        out = rng.uniform(self.lo[dims], self.hi[dims])
        normal = ~np.isnan(self.normal_mu[dims])
        if normal.any():
            idx = np.flatnonzero(normal)
            out[idx] = self._truncated_normal(rng, self.normal_mu[dims[idx]], self.normal_sd[dims[idx]],
                                              self.lo[dims[idx]], self.hi[dims[idx]])
        return out

    def random(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.stack([self.sample(rng, np.arange(self.dim)) for _ in range(count)]) if count else \
            np.zeros((0, self.dim))

    @staticmethod
    def _truncated_normal(rng, mu, sd, lo, hi):
        mu, sd, lo, hi = (np.asarray(v, dtype=float).copy() for v in (mu, sd, lo, hi))
        out = np.empty(len(mu))
        todo = np.arange(len(mu))
        while len(todo):
            draw = rng.normal(mu[todo], sd[todo])
            ok = (draw >= lo[todo]) & (draw <= hi[todo])
            out[todo[ok]] = draw[ok]
            todo = todo[~ok]
        return out

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)


@dataclass
class OptimizeResult:
    x: np.ndarray
    cost: float
    evaluations: int
    iterations: int
    history: list[float] = field(default_factory=list)


class _Budget(Exception):
    pass


class _CountingCost:
    def __init__(self, cost: Callable[[np.ndarray], np.ndarray], max_evaluations: int | None):
        self.cost = cost
        self.max_evaluations = max_evaluations
        self.evaluations = 0

    @property
    def remaining(self) -> float:
        if self.max_evaluations is None:
            return float("inf")
        return self.max_evaluations - self.evaluations

    def __call__(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(rows)
        if not len(rows):
            return np.zeros(0)
        self.evaluations += len(rows)
        out = np.asarray(self.cost(rows), dtype=float).reshape(len(rows))
        if np.any(np.isnan(out)):
            raise ValueError("cost returned NaN")
        return out


def _neighbor_state(s: np.ndarray, space: SearchSpace, rng: np.random.Generator) -> np.ndarray:
    out = s.copy()
    j = int(rng.integers(space.dim))
    out[j] = space.sample(rng, [j])[0]
    return out


def _move(e_old: float, e_new: float, temperature: float, rng: np.random.Generator) -> bool:
    if e_new < e_old:
        return True
    return bool(rng.random() < np.exp((e_old - e_new) / temperature))


def run_simulated_annealing(cost, space: SearchSpace, spec: OptimizerSpec, x0=None) -> OptimizeResult:
    """Simulated annealing with a stagnation counter as the clock.

    ``k`` counts iterations since the last new optimum and resets to zero on
    one; temperature is (K - k) / K and the loop ends when k reaches K.
    """
    rng = np.random.default_rng(spec.seed)
    ev = _CountingCost(cost, spec.max_evaluations)
    K = spec.budget
    s = (space.mean if x0 is None else np.asarray(x0, dtype=float)).copy()
    e = float(ev(s)[0])
    s_best, e_best = s.copy(), e
    history = [e_best]
    k = 0
    iterations = 0
    while k < K and ev.remaining >= 1:
        temperature = (K - k) / K
        s_new = _neighbor_state(s, space, rng)
        e_new = float(ev(s_new)[0])
        if _move(e, e_new, temperature, rng):
            s, e = s_new, e_new
        if e < e_best:
            s_best, e_best = s.copy(), e
            k = 0
        k += 1
        iterations += 1
        history.append(e_best)
    return OptimizeResult(s_best, e_best, ev.evaluations, iterations, history)


def run_greedy(cost, space: SearchSpace, spec: OptimizerSpec, x0=None) -> OptimizeResult:
    """Perturb the best-so-far set one random parameter at a time; keep improvements."""
    rng = np.random.default_rng(spec.seed)
    ev = _CountingCost(cost, spec.max_evaluations)
    s_best = (space.mean if x0 is None else np.asarray(x0, dtype=float)).copy()
    e_best = float(ev(s_best)[0])
    history = [e_best]
    k = 0
    iterations = 0
    while k < spec.budget and ev.remaining >= 1:
        cand = _neighbor_state(s_best, space, rng)
        e = float(ev(cand)[0])
        if e < e_best:
            s_best, e_best = cand, e
            k = 0
        k += 1
        iterations += 1
        history.append(e_best)
    return OptimizeResult(s_best, e_best, ev.evaluations, iterations, history)


def _group_sizes(pool: int, fractions) -> tuple[int, int, int]:
    nb = max(1, int(round(pool * fractions[0])))
    nm = max(0, min(pool - nb, int(round(pool * fractions[1]))))
    return nb, nm, pool - nb - nm


def run_genetic(cost, space: SearchSpace, spec: OptimizerSpec, seeds=None) -> OptimizeResult:
    """Genetic search with Best / Middle / Worst groups.

    The initial pool holds the space mean, any ``seeds`` (warm starts) and
    random draws from the base distributions. Each generation the pool is
    ranked; every parameter of an individual changes with its group's alpha,
    by crossover from a Best individual (beta) or by mutation drawn from the
    base distribution (gamma) or from a normal fitted to the Best group.
    Only changed individuals are re-evaluated.
    """
    rng = np.random.default_rng(spec.seed)
    ev = _CountingCost(cost, spec.max_evaluations)
    P, d = spec.pool_size, space.dim
    pop = space.random(rng, P)
    pop[0] = space.mean
    for i, s in enumerate([] if seeds is None else list(seeds)[:P - 1]):
        pop[i + 1] = space.clip(np.asarray(s, dtype=float).reshape(d))
    scores = ev(pop)
    nb, nm, _ = _group_sizes(P, spec.group_fractions)
    group_of = np.array([0] * nb + [1] * nm + [2] * (P - nb - nm))
    probs = np.array(spec.group_probs)
    best_x, best_e = None, np.inf
    stagnant = 0
    history: list[float] = []
    generations = 0
    cols = np.arange(d)
    while True:
        order = np.lexsort((np.arange(P), scores))
        pop, scores = pop[order], scores[order]
        if scores[0] < best_e:
            best_x, best_e = pop[0].copy(), float(scores[0])
            stagnant = 0
        else:
            stagnant += 1
        history.append(best_e)
        if stagnant >= spec.budget or ev.remaining < 1:
            break
        generations += 1
        best_group = pop[:nb]
        mu = best_group.mean(axis=0)
        sd = best_group.std(axis=0)
        new = pop.copy()
        for i in range(P):
            alpha, beta, gamma = probs[group_of[i]]
            change = rng.random(d) < alpha
            cross = rng.random(d) < beta
            base = rng.random(d) < gamma
            donors = rng.integers(nb, size=d)
            if not change.any():
                continue
            idx = np.flatnonzero(change)
            vals = np.empty(len(idx))
            c_idx = cross[idx]
            vals[c_idx] = best_group[donors[idx[c_idx]], cols[idx[c_idx]]]
            m_idx = idx[~c_idx]
            if len(m_idx):
                from_base = base[m_idx]
                mv = np.empty(len(m_idx))
                if from_base.any():
                    mv[from_base] = space.sample(rng, m_idx[from_base])
                if (~from_base).any():
                    j = m_idx[~from_base]
                    mv[~from_base] = np.clip(rng.normal(mu[j], sd[j]), space.lo[j], space.hi[j])
                vals[~c_idx] = mv
            new[i, idx] = vals
        changed = np.flatnonzero(np.any(new != pop, axis=1))
        if len(changed) > ev.remaining:
            changed = changed[:int(ev.remaining)]
            keep = np.setdiff1d(np.arange(P), changed)
            new[keep] = pop[keep]
        if len(changed):
            scores = scores.copy()
            scores[changed] = ev(new[changed])
        pop = new
    return OptimizeResult(best_x, best_e, ev.evaluations, generations, history)


def optimize(cost, space: SearchSpace, spec: OptimizerSpec, seeds=None) -> OptimizeResult:
    if spec.method == "annealing":
        return run_simulated_annealing(cost, space, spec, x0=None if not seeds else seeds[0])
    if spec.method == "greedy":
        return run_greedy(cost, space, spec, x0=None if not seeds else seeds[0])
    return run_genetic(cost, space, spec, seeds=seeds)
