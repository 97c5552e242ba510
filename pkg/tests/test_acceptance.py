"""Acceptance criteria, one summary line each.

The lines are printed at the end of the pytest run under "acceptance
criteria".  Criteria 1, 2 and 3 fail as literally stated; the strict xfail
tests check the literal statement and the companion tests check what the
independent oracles give.  See the decisions ledger for the analysis.
"""

import time

import numpy as np
import pytest

from canonical_ouq import hydraulic
from canonical_ouq.baseline import DistributionSpec, EmpiricalCdf, bootstrap_ci, empirical_quantile, sample
from canonical_ouq.canonical import InputSpec, MomentSequence, moments_to_canonical, to_unit_interval
from canonical_ouq.envelope import lower_envelope, max_quantile
from canonical_ouq.models import builtin_model
from canonical_ouq.objective import EQUALITY, INEQUALITY, ObjectiveSpec, PofObjective, minimize_pof
from canonical_ouq.reconstruction import measure_from_canonical
from canonical_ouq.solver import SolverConfig, brute_force_grid

from oracles import discrete_moments, markov_envelope

LINEAR = builtin_model("linear", 1)


# -- 1. roundtrip reconstruction ---------------------------------------------------------


def well_separated_measure(rng, n_atoms):
    """Atoms in [0.05, 0.95] at least 0.1 apart, weights at least 0.02."""
    while True:
        atoms = np.sort(rng.uniform(0.05, 0.95, n_atoms))
        if n_atoms == 1 or np.min(np.diff(atoms)) >= 0.1:
            break
    weights = 0.02 + (1 - 0.02 * n_atoms) * rng.dirichlet(np.ones(n_atoms))
    return atoms, weights


def roundtrip_specs(count=1000, seed=1):
    """Random specs: ``N`` cycles through 1, 2, 3; bounds ``[l, l + w]`` with ``|l| <= w``."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = 1 + i % 3
        width = rng.uniform(0.5, 10.0)
        lower = rng.uniform(-1.0, 1.0) * width
        unit_atoms, weights = well_separated_measure(rng, n + 1)
        yield n, lower, lower + width, unit_atoms, weights


def roundtrip_error(n, lower, upper, atoms, weights):
    c = discrete_moments(atoms, weights, 2 * n + 1)
    canon = moments_to_canonical(MomentSequence(tuple(c), lower, upper))
    m = measure_from_canonical(canon, MomentSequence(tuple(c[:n]), lower, upper), lower, upper)
    if len(m) != n + 1:
        return np.inf
    return max(np.max(np.abs(m.atoms - atoms)), np.max(np.abs(m.weights - weights)))


@pytest.mark.xfail(strict=True, reason="float64 raw moments on intervals away from the origin limit atom accuracy")
def test_criterion_1_roundtrip_as_stated(acceptance):
    start = time.perf_counter()
    errors = np.array([roundtrip_error(n, lo, hi, lo + (hi - lo) * a, w) for n, lo, hi, a, w in roundtrip_specs()])
    elapsed = time.perf_counter() - start
    ok = errors.max() <= 1e-7 and elapsed < 10
    acceptance(
        "1",
        ok,
        f"{np.sum(errors <= 1e-7)}/1000 specs within 1e-7, max error {errors.max():.1e}, {elapsed:.1f} s",
    )
    assert ok


def test_criterion_1_roundtrip_unit_coordinates(acceptance):
    # the same measures with moments taken on [0, 1], where nothing cancels
    start = time.perf_counter()
    errors = np.array([roundtrip_error(n, 0.0, 1.0, a, w) for n, _, _, a, w in roundtrip_specs()])
    elapsed = time.perf_counter() - start
    ok = errors.max() <= 1e-7 and elapsed < 10
    acceptance("1 (moments on [0, 1])", ok, f"max error {errors.max():.1e} over 1000 specs, {elapsed:.1f} s")
    assert ok


# -- 2. Markov case ----------------------------------------------------------------------

MARKOV = [InputSpec.from_moments(0.0, 1.0, [0.5])]
MARKOV_H = (0.1, 0.3, 0.45, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)
MARKOV_GRID_H = (0.3, 0.7)


@pytest.fixture(scope="module")
def markov_case():
    start = time.perf_counter()
    de = {h: minimize_pof(ObjectiveSpec(tuple(MARKOV), LINEAR, h), SolverConfig(seed=0)).value for h in MARKOV_H}
    grid = {h: brute_force_grid(PofObjective(ObjectiveSpec(tuple(MARKOV), LINEAR, h)), 2, 200)[1] for h in MARKOV_GRID_H}
    q = {p: max_quantile(MARKOV, LINEAR, level=p, interval=(0.0, 1.0), solver=SolverConfig(seed=0)) for p in (0.4, 0.95)}
    return de, grid, q, time.perf_counter() - start


@pytest.mark.xfail(strict=True, reason="the stated values 0.5 on [0.5, 1) and quantile 0.5 contradict Markov's inequality")
def test_criterion_2_markov_as_stated(markov_case, acceptance):
    de, grid, q, elapsed = markov_case
    stated = {h: 0.0 if h < 0.5 else 0.5 for h in MARKOV_H}
    de_err = max(abs(de[h] - stated[h]) for h in MARKOV_H)
    grid_err = max(abs(grid[h] - de[h]) for h in MARKOV_GRID_H)
    res = {p: (r.upper - r.lower) for p, r in q.items()}
    q_err = (abs(q[0.4].quantile - 0.5) - res[0.4], abs(q[0.95].quantile - 1.0) - res[0.95])
    ok = de_err <= 1e-3 and grid_err <= 1e-3 and max(q_err) <= 0 and elapsed < 60
    acceptance(
        "2",
        ok,
        f"stated values: max |DE - stated| {de_err:.3f} (at h=0.6 DE {de[0.6]:.4f}, stated 0.5), "
        f"max |grid - DE| {grid_err:.2e}, max_quantile(0.4) {q[0.4].quantile:.4f} (stated 0.5), "
        f"max_quantile(0.95) {q[0.95].quantile:.4f} (stated 1.0), {elapsed:.0f} s",
    )
    assert ok


def test_criterion_2_markov_analytic(markov_case, acceptance):
    # inf P(X <= h) = max(0, 1 - 0.5 / h) on [0, 1): mass just above h and at 1.
    # The infimum is not attained, so the grid only bounds it from above.
    de, grid, q, elapsed = markov_case
    de_err = max(abs(de[h] - markov_envelope(h)) for h in MARKOV_H)
    grid_below = max(markov_envelope(h) - grid[h] for h in MARKOV_GRID_H)
    grid_gap = max(grid[h] - de[h] for h in MARKOV_GRID_H)
    q04, q95 = q[0.4], q[0.95]
    ok = (
        de_err <= 1e-3
        and grid_below <= 1e-12
        and abs(q04.quantile - 5 / 6) <= (q04.upper - q04.lower) + 1e-3
        and abs(q95.quantile - 1.0) <= (q95.upper - q95.lower)
        and elapsed < 60
    )
    acceptance(
        "2 (analytic envelope 1 - 0.5/h)",
        ok,
        f"max |DE - exact| {de_err:.1e}, grid above DE by at most {grid_gap:.2e}, "
        f"max_quantile(0.4) {q04.quantile:.4f} (exact 0.8333), max_quantile(0.95) {q95.quantile:.4f}, {elapsed:.0f} s",
    )
    assert ok


# -- 3. brute-force equivalence ----------------------------------------------------------


def random_problem(rng, i):
    name = ("linear", "square")[i % 2]
    lower = rng.uniform(-2.0, 2.0)
    upper = lower + rng.uniform(0.5, 5.0)
    mean = lower + (upper - lower) * rng.uniform(0.1, 0.9)
    if name == "linear":
        g_lo, g_hi = lower, upper
    else:
        g_lo = 0.0 if lower < 0 < upper else min(lower**2, upper**2)
        g_hi = max(lower**2, upper**2)
    h = g_lo + (g_hi - g_lo) * rng.uniform(0.05, 0.95)
    return ObjectiveSpec((InputSpec.from_moments(lower, upper, [mean]),), builtin_model(name, 1), h), name


def closed_form_linear(spec: ObjectiveSpec) -> float:
    # mass p at the lower bound, the rest just above h
    s = spec.inputs[0]
    return max(0.0, (spec.threshold - s.moments().values[0]) / (spec.threshold - s.lower))


@pytest.fixture(scope="module")
def brute_force_cases():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    rows = []
    for i in range(20):
        spec, name = random_problem(rng, i)
        de = minimize_pof(spec, SolverConfig(seed=i)).value
        _, grid = brute_force_grid(PofObjective(spec), 2, 200)
        exact = closed_form_linear(spec) if name == "linear" else None
        rows.append((name, de, grid, exact))
    return rows, time.perf_counter() - start


@pytest.mark.xfail(strict=True, reason="the infimum is not attained; a 200-point grid misses it by up to ~2e-3")
def test_criterion_3_brute_force_as_stated(brute_force_cases, acceptance):
    rows, elapsed = brute_force_cases
    gaps = np.array([abs(de - grid) for _, de, grid, _ in rows])
    ok = gaps.max() <= 1e-3 and elapsed < 300
    acceptance(
        "3",
        ok,
        f"{np.sum(gaps <= 1e-3)}/20 within 1e-3 of the grid, max |DE - grid| {gaps.max():.1e}, {elapsed:.0f} s",
    )
    assert ok


def test_criterion_3_grid_is_upper_bound(brute_force_cases, acceptance):
    rows, elapsed = brute_force_cases
    below = max(de - grid for _, de, grid, _ in rows)
    exact_err = max(abs(de - exact) for _, de, _, exact in rows if exact is not None)
    ok = below <= 1e-12 and exact_err <= 1e-3 and elapsed < 300
    acceptance(
        "3 (grid as upper bound, closed form for G(x) = x)",
        ok,
        f"max (DE - grid) {below:.1e}, max |DE - exact| {exact_err:.1e} on the linear problems, {elapsed:.0f} s",
    )
    assert ok


# -- 4, 5, 6. hydraulic envelopes --------------------------------------------------------

H_GRID = np.linspace(1.0, 5.0, 20)
HYDRAULIC_SOLVER = SolverConfig(seed=0, population=40, max_generations=100)


@pytest.fixture(scope="module")
def hydraulic_runs():
    model = builtin_model("hydraulic")
    start = time.perf_counter()
    curves = {n: lower_envelope(hydraulic.hydraulic_inputs(n), model, EQUALITY, H_GRID, HYDRAULIC_SOLVER) for n in (1, 2, 3)}
    relaxed = lower_envelope(hydraulic.hydraulic_inputs(2, relax=0.05), model, INEQUALITY, H_GRID, HYDRAULIC_SOLVER)
    elapsed = time.perf_counter() - start
    dists = hydraulic.distributions()
    streams = np.random.SeedSequence(0).spawn(4)
    points = np.column_stack([sample(dists[k], 100_000, np.random.default_rng(s)) for k, s in zip(hydraulic.NAMES, streams)])
    mc = EmpiricalCdf(model.evaluate(points))(H_GRID)
    return curves, relaxed, mc, elapsed


@pytest.mark.slow
def test_criterion_4_nesting(hydraulic_runs, acceptance):
    curves, _, mc, elapsed = hydraulic_runs
    env = [curves[n].values for n in (1, 2, 3)]
    v12 = np.max(env[0] - env[1])
    v23 = np.max(env[1] - env[2])
    vmc = max(np.max(e - mc) for e in env)
    failed = sum(len(c.errors) for c in curves.values())
    ok = v12 <= 0.02 and v23 <= 0.02 and vmc <= 0.02 and failed == 0 and elapsed < 1800
    acceptance(
        "4",
        ok,
        f"max(env1 - env2) {v12:.3f}, max(env2 - env3) {v23:.3f}, max(env - MC) {vmc:.3f}, "
        f"{failed} failed grid points, {elapsed:.0f} s for all four envelopes",
    )
    assert ok


@pytest.mark.slow
def test_criterion_5_constraints_at_optimum(hydraulic_runs, acceptance):
    curves, _, _, _ = hydraulic_runs
    worst_rel = worst_unit = 0.0
    count = 0
    for n, curve in curves.items():
        inputs = hydraulic.hydraulic_inputs(n)
        for measure in curve.measures:
            for spec, component in zip(inputs, measure):
                target = np.array(spec.moments().values)
                got = component.moments(n)
                unit_target = np.array(to_unit_interval(spec.moments()).values)
                worst_rel = max(worst_rel, np.max(np.abs(got - target) / np.abs(target)))
                worst_unit = max(worst_unit, np.max(np.abs(component.unit_moments(n) - unit_target)))
                count += 1
    ok = worst_rel <= 1e-6 and worst_unit <= 1e-6
    acceptance(
        "5",
        ok,
        f"{count} argmin components: max relative moment error {worst_rel:.1e}, "
        f"max error on [0, 1] {worst_unit:.1e}",
    )
    assert ok


@pytest.mark.slow
def test_criterion_6_inequality_containment(hydraulic_runs, acceptance):
    curves, relaxed, _, _ = hydraulic_runs
    excess = np.max(relaxed.values - curves[2].values)
    ok = excess <= 0.02 and not relaxed.errors
    acceptance("6", ok, f"two moments per input relaxed to +-5% intervals: max(ineq - eq) {excess:.3f} over {H_GRID.size} thresholds")
    assert ok


# -- 7. baseline -------------------------------------------------------------------------


def test_criterion_7_baseline(acceptance):
    values = sample(DistributionSpec("uniform", (0.0, 1.0)), 100_000, seed=0)
    q = empirical_quantile(values, 0.95)
    lo, hi = bootstrap_ci(values, 0.95, level=0.9, n_boot=1000, seed=0)
    ok = abs(q - 0.95) <= 0.01 and lo <= q <= hi and lo <= 0.95 <= hi
    acceptance("7", ok, f"q95 {q:.4f}, 90% CI [{lo:.4f}, {hi:.4f}]")
    assert ok


def test_criterion_8_not_reproducible(acceptance):
    acceptance(
        "8",
        "N/A",
        "the industrial thermal-hydraulic study and the comparison runs of the second optimizer are out of scope",
    )
