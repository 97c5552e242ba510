"""CDF lower envelope over a threshold grid and the maximal quantile.

The maximal ``p``-quantile over the moment class equals the ``p``-quantile of
the lower envelope ``h -> inf_mu P_mu(G(X) <= h)``, so the quantile is found
by searching for the crossing of the envelope with ``p``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .canonical import InputSpec
from .errors import BracketingFailure, OUQError
from .models import Model
from .objective import EQUALITY, ObjectiveSpec, PofObjective, ProductMeasure, minimize_pof
from .solver import SolverConfig, SolverReport

log = logging.getLogger(__name__)


@dataclass
class EnvelopeCurve:
    """Minimized CDF values on a threshold grid.

    ``raw_values`` are the per-threshold optimizer results.  ``values`` is the
    repaired envelope: at each threshold, the smallest CDF value reached there
    by any of the optimizers' witness measures.  ``witness[j]`` indexes the
    grid point whose measure attains ``values[j]``.
    """

    thresholds: np.ndarray
    values: np.ndarray
    raw_values: np.ndarray
    measures: list[ProductMeasure | None]
    params: list[np.ndarray | None]
    reports: list[SolverReport | None]
    witness: np.ndarray
    errors: dict[int, str] = field(default_factory=dict)

    def witness_measure(self, j: int) -> ProductMeasure | None:
        k = self.witness[j]
        return self.measures[k] if k >= 0 else None

    def crossing(self, p: float) -> float | None:
        """Smallest grid threshold where the envelope reaches ``p``."""
        hit = np.nonzero(self.values >= p)[0]
        return float(self.thresholds[hit[0]]) if hit.size else None


def _repair(objective: PofObjective, thresholds, params) -> tuple[np.ndarray, np.ndarray]:
    """Score every witness at every threshold and keep the pointwise minimum.

    Each entry is attained by a feasible measure, and a minimum of CDFs is
    nondecreasing in ``h``, so the result is an upper bound on the true
    envelope that is monotone by construction.
    """
    n = len(thresholds)
    values = np.full(n, np.nan)
    witness = np.full(n, -1, dtype=int)
    for k, x in enumerate(params):
        if x is None:
            continue
        cdf = np.atleast_1d(objective.at(x, thresholds))
        better = np.isnan(values) | (cdf < values)
        values[better] = cdf[better]
        witness[better] = k
    return values, witness


def lower_envelope(
    inputs: Sequence[InputSpec],
    model: Model,
    mode: str = EQUALITY,
    thresholds: Sequence[float] = (),
    solver: SolverConfig = SolverConfig(),
) -> EnvelopeCurve:
    """Minimize the probability of failure at each threshold of a sorted grid.

    Each grid point warm-starts DE with the previous point's minimizer and
    uses seed ``solver.seed + j``.  A failing grid point is recorded in
    ``errors`` and skipped.
    """
    h = np.asarray(thresholds, dtype=float)
    if h.ndim != 1 or not h.size:
        raise ValueError("threshold grid must be a non-empty 1-d sequence")
    if np.any(np.diff(h) < 0):
        raise ValueError("threshold grid must be sorted")
    base = ObjectiveSpec(tuple(inputs), model, float(h[0]), mode)
    objective = PofObjective(base)
    raw = np.full(h.size, np.nan)
    measures: list[ProductMeasure | None] = [None] * h.size
    params: list[np.ndarray | None] = [None] * h.size
    reports: list[SolverReport | None] = [None] * h.size
    errors: dict[int, str] = {}
    previous = None
    for j, hj in enumerate(h):
        spec = ObjectiveSpec(base.inputs, model, float(hj), mode)
        try:
            res = minimize_pof(spec, solver.with_seed(solver.seed + j), init=previous, objective=objective)
        except OUQError as exc:
            log.warning("threshold %g failed: %s", hj, exc)
            errors[j] = f"{type(exc).__name__}: {exc}"
            continue
        raw[j], measures[j], params[j], reports[j] = res.value, res.measure, res.params, res.report
        previous = res.params[None, :]
        log.info("h=%g  min pof=%.6f  (%d generations)", hj, res.value, res.report.generations)
    values, witness = _repair(objective, h, params)
    # already monotone after the witness repair; the running max is a safeguard
    values = np.fmax.accumulate(values)
    return EnvelopeCurve(h, values, raw, measures, params, reports, witness, errors)


@dataclass
class QuantileResult:
    """Maximal ``level``-quantile, bracketed by ``[lower, upper]``.

    ``witness`` is a measure with ``P(G(X) <= lower) < level``, which proves
    the maximal quantile is at least ``lower``.
    """

    level: float
    quantile: float
    lower: float
    upper: float
    lower_value: float
    upper_value: float
    witness: ProductMeasure | None
    probes: list[tuple[float, float]] = field(default_factory=list)


class _EnvelopeProbe:
    """Envelope value at single thresholds, best of several DE restarts.

    Only the predicate ``envelope(h) >= level`` matters, so the search stops
    at the first measure scoring below the level.  Every minimizer found is
    kept; a threshold at which a stored witness already falls below the level
    is settled without running DE.
    """

    def __init__(self, inputs, model, mode, solver: SolverConfig, restarts: int):
        self.inputs = tuple(inputs)
        self.model = model
        self.mode = mode
        self.solver = solver
        self.restarts = restarts
        self.objective = PofObjective(ObjectiveSpec(self.inputs, model, 0.0, mode))
        self.witnesses: list[np.ndarray] = []
        self.calls = 0

    def best_known(self, h: float) -> tuple[float, np.ndarray | None]:
        best, arg = np.inf, None
        for x in self.witnesses:
            v = self.objective.at(x, h)
            if v < best:
                best, arg = v, x
        return best, arg

    def __call__(self, h: float, level: float) -> tuple[float, np.ndarray | None]:
        known, arg = self.best_known(h)
        if known < level:
            return known, arg
        spec = ObjectiveSpec(self.inputs, self.model, h, self.mode)
        best, best_x = known, arg
        for r in range(self.restarts):
            seed = self.solver.seed + 7919 * self.calls + r
            init = np.array(self.witnesses[-3:]) if self.witnesses else None
            res = minimize_pof(spec, self.solver.with_seed(seed), init=init, objective=self.objective, target=level)
            self.witnesses.append(res.params)
            if res.value < best:
                best, best_x = res.value, res.params
            if best < level:
                break
        self.calls += 1
        return best, best_x


def model_output_range(inputs: Sequence[InputSpec], model: Model, samples: int = 256, seed: int = 0):
    """Rough ``(min, max)`` of the model over the input box: corners, centre, random points."""
    lo = np.array([s.lower for s in inputs])
    hi = np.array([s.upper for s in inputs])
    d = len(inputs)
    pts = [0.5 * (lo + hi)]
    if d <= 12:
        corners = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
        pts.extend(lo + corners * (hi - lo))
    rng = np.random.default_rng(seed)
    pts.extend(lo + rng.random((samples, d)) * (hi - lo))
    vals = model.evaluate(np.array(pts))
    if not np.any(np.isfinite(vals)):
        raise BracketingFailure("model returned no finite value on the input box")
    finite = vals[np.isfinite(vals)]
    return float(finite.min()), float(finite.max())


def max_quantile(
    inputs: Sequence[InputSpec],
    model: Model,
    mode: str = EQUALITY,
    level: float = 0.95,
    interval: tuple[float, float] | None = None,
    resolution: float | None = None,
    solver: SolverConfig = SolverConfig(),
    restarts: int = 3,
) -> QuantileResult:
    """Bisection for the smallest ``h`` with ``inf_mu P_mu(G(X) <= h) >= level``.

    ``interval`` defaults to an estimate of the model's output range and is
    widened if it fails to bracket the crossing.  ``resolution`` defaults to
    the initial bracket width over 2**10.

    Raises
    ------
    BracketingFailure
        No bracket found after widening.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    probe = _EnvelopeProbe(inputs, model, mode, solver, restarts)
    out_lo, out_hi = model_output_range(inputs, model, seed=solver.seed)
    span = max(out_hi - out_lo, 1e-12)
    lo, hi = interval if interval is not None else (out_lo, out_hi)
    if not lo < hi:
        raise ValueError("search interval must satisfy lo < hi")
    probes: list[tuple[float, float]] = []

    def evaluate(h):
        v, x = probe(h, level)
        probes.append((float(h), float(v)))
        return v, x

    lo_val, lo_x = evaluate(lo)
    lo_candidates = [min(lo, out_lo) - span * k for k in (0, 1, 2, 4, 8)]
    for cand in lo_candidates:
        if lo_val < level:
            break
        lo = cand
        lo_val, lo_x = evaluate(lo)
    if lo_val >= level:
        raise BracketingFailure(f"envelope >= {level} already at h = {lo}")

    hi_val, _ = evaluate(hi)
    for cand in [max(hi, out_hi) + span * k for k in (0, 1, 2, 4, 8)]:
        if hi_val >= level:
            break
        hi = cand
        hi_val, _ = evaluate(hi)
    if hi_val < level:
        raise BracketingFailure(f"envelope stays below {level} up to h = {hi}")

    if resolution is None:
        resolution = (hi - lo) / 2**10
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        val, x = evaluate(mid)
        if val >= level:
            hi, hi_val = mid, val
        else:
            lo, lo_val, lo_x = mid, val, x
    witness = probe.objective.measure(lo_x)[0] if lo_x is not None else None
    return QuantileResult(level, 0.5 * (lo + hi), lo, hi, lo_val, hi_val, witness, probes)
