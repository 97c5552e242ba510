"""Differential evolution on the open unit cube, plus a grid oracle for tests."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .canonical import GAMMA_EPS

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SolverConfig:
    """DE/rand/1/bin settings.  ``population=None`` means ``max(40, 10*dim)``."""

    population: int | None = None
    mutation: float = 0.8
    crossover: float = 0.9
    max_generations: int = 300
    tolerance: float = 1e-8
    stall_generations: int = 50
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.population is not None and self.population < 4:
            raise ValueError("population must be >= 4")
        if not 0 < self.mutation <= 2:
            raise ValueError("mutation factor must lie in (0, 2]")
        if not 0 <= self.crossover <= 1:
            raise ValueError("crossover rate must lie in [0, 1]")
        if self.stall_generations < 1:
            raise ValueError("stall_generations must be >= 1")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")

    def population_size(self, dim: int) -> int:
        return self.population if self.population is not None else max(40, 10 * dim)

    def with_seed(self, seed: int) -> "SolverConfig":
        return replace(self, seed=seed)


@dataclass
class SolverReport:
    generations: int = 0
    trace: list[float] = field(default_factory=list)
    converged: bool = False
    calls: int = 0

    def to_dict(self) -> dict:
        return {
            "generations": self.generations,
            "converged": bool(self.converged),
            "calls": self.calls,
            "best": self.trace[-1] if self.trace else None,
        }


def _evaluate(objective, pop, pool):
    if pool is None:
        return np.array([objective(x) for x in pop], dtype=float)
    return np.array(list(pool.map(objective, pop)), dtype=float)


def differential_evolution(
    objective: Objective,
    dim: int,
    config: SolverConfig = SolverConfig(),
    init: np.ndarray | None = None,
    lower_bound: float | None = None,
    target: float | None = None,
) -> tuple[np.ndarray, float, SolverReport]:
    """Minimize ``objective`` over ``[eps, 1 - eps]**dim``.

    Parameters
    ----------
    objective
        Called with one candidate vector at a time.
    init
        Optional rows seeding the initial population (warm start); remaining
        members are drawn uniformly.
    lower_bound
        Known lower bound of the objective; reaching it stops the run.
    target
        Stop as soon as a value strictly below ``target`` is found.  For
        callers that only need to decide whether the minimum is below it.

    Returns
    -------
    best vector, best value, report
        Non-convergence is reported, never raised.

    Notes
    -----
    Trials are generated for the whole population before any is evaluated, so
    the trajectory depends only on the seed even when ``workers > 1``.
    Convergence needs a value spread below ``tolerance`` together with either
    a collapsed population or ``stall_generations`` generations without
    improvement; equal values alone often just mean the population is
    sitting on a plateau that a few more generations would leave.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    lo, hi = GAMMA_EPS, 1.0 - GAMMA_EPS
    rng = np.random.default_rng(config.seed)
    npop = config.population_size(dim)
    pop = rng.uniform(lo, hi, size=(npop, dim))
    if init is not None:
        seeds = np.clip(np.atleast_2d(np.asarray(init, dtype=float)), lo, hi)[:npop]
        pop[: len(seeds)] = seeds

    report = SolverReport()
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        fit = _evaluate(objective, pop, pool)
        report.calls += npop
        best = int(np.argmin(fit))
        report.trace.append(float(fit[best]))

        def done() -> bool:
            if lower_bound is not None and fit[best] <= lower_bound:
                return True
            if target is not None and fit[best] < target:
                return True
            if np.ptp(fit) > config.tolerance * max(1.0, abs(fit[best])):
                return False
            stalled = len(report.trace) > config.stall_generations and (
                report.trace[-config.stall_generations - 1] - report.trace[-1] <= config.tolerance
            )
            return stalled or np.ptp(pop, axis=0).max() <= 1e-3

        report.converged = bool(done())
        idx = np.arange(npop)
        while not report.converged and report.generations < config.max_generations:
            # r1, r2, r3 distinct and different from the target index
            keys = rng.random((npop, npop))
            keys[idx, idx] = np.inf
            picks = np.argsort(keys, axis=1)[:, :3]
            mutant = pop[picks[:, 0]] + config.mutation * (pop[picks[:, 1]] - pop[picks[:, 2]])
            cross = rng.random((npop, dim)) < config.crossover
            cross[idx, rng.integers(0, dim, npop)] = True
            trial = np.clip(np.where(cross, mutant, pop), lo, hi)

            trial_fit = _evaluate(objective, trial, pool)
            report.calls += npop
            better = trial_fit <= fit
            pop[better] = trial[better]
            fit[better] = trial_fit[better]
            best = int(np.argmin(fit))
            report.generations += 1
            report.trace.append(float(fit[best]))
            report.converged = bool(done())
    finally:
        if pool is not None:
            pool.shutdown()
    return pop[best].copy(), float(fit[best]), report


def brute_force_grid(objective: Objective, dim: int, resolution: int) -> tuple[np.ndarray, float]:
    """Exhaustive search over ``linspace(eps, 1 - eps, resolution)**dim``."""
    if dim > 3:
        raise ValueError("grid search is meant for dim <= 3")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axis = np.linspace(GAMMA_EPS, 1.0 - GAMMA_EPS, resolution)
    best_x, best_f = None, np.inf
    for point in itertools.product(axis, repeat=dim):
        x = np.array(point)
        f = objective(x)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, float(best_f)
