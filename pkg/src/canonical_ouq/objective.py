"""Probability of failure over the tensor grid of per-input atoms.

Equality mode: each input contributes ``N_i + 1`` free canonical moments.
Inequality mode: each input contributes ``N_i`` encoded moments followed by
``N_i + 1`` free canonical moments.  Every coordinate lives in the unit cube,
so the optimizer never sees a constraint.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .canonical import (
    GAMMA_EPS,
    CanonicalSequence,
    InputSpec,
    MomentSequence,
    embed_free_parameters,
    moments_to_canonical,
    next_moment_range,
    to_unit_interval,
)
from .models import Model
from .reconstruction import DiscreteMeasure, measure_from_canonical
from .solver import SolverConfig, SolverReport, differential_evolution

EQUALITY = "equality"
INEQUALITY = "inequality"


@dataclass(frozen=True)
class ProductMeasure:
    measures: tuple[DiscreteMeasure, ...]

    def __post_init__(self):
        object.__setattr__(self, "measures", tuple(self.measures))
        if not self.measures:
            raise ValueError("a product measure needs at least one component")

    def __len__(self):
        return len(self.measures)

    def __getitem__(self, i):
        return self.measures[i]

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """All atom combinations ``(M, d)`` and their product weights ``(M,)``."""
        atoms = np.meshgrid(*[m.atoms for m in self.measures], indexing="ij")
        weights = np.meshgrid(*[m.weights for m in self.measures], indexing="ij")
        points = np.stack([a.ravel() for a in atoms], axis=1)
        return points, np.prod(np.stack([w.ravel() for w in weights], axis=1), axis=1)

    def cdf(self, model: Model, h) -> np.ndarray | float:
        """``P(G(X) <= h)`` for a scalar or an array of thresholds."""
        points, weights = self.grid()
        values = model.evaluate(points)
        return grid_cdf(values, weights, h)

    def to_dict(self, names: Sequence[str] | None = None) -> list[dict]:
        out = []
        for i, m in enumerate(self.measures):
            entry = {"name": names[i] if names else f"x{i + 1}"}
            entry.update(m.to_dict())
            out.append(entry)
        return out


def grid_cdf(values: np.ndarray, weights: np.ndarray, h):
    h_arr = np.asarray(h, dtype=float)
    mask = values[None, :] <= h_arr.reshape(-1, 1)
    out = np.clip(mask @ weights, 0.0, 1.0)
    return float(out[0]) if h_arr.ndim == 0 else out


@dataclass(frozen=True)
class ObjectiveSpec:
    inputs: tuple[InputSpec, ...]
    model: Model
    threshold: float
    mode: str = EQUALITY

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.inputs:
            raise ValueError("need at least one input")
        if self.mode not in (EQUALITY, INEQUALITY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == EQUALITY and not all(s.is_equality for s in self.inputs):
            raise ValueError("equality mode requires equality constraints on every input")
        if self.model.dimension != len(self.inputs):
            raise ValueError(f"model dimension {self.model.dimension} != {len(self.inputs)} inputs")

    @property
    def dimension(self) -> int:
        return parameter_count(self.inputs, self.mode)


def parameter_count(inputs: Sequence[InputSpec], mode: str) -> int:
    if mode == EQUALITY:
        return sum(s.n_moments + 1 for s in inputs)
    return sum(2 * s.n_moments + 1 for s in inputs)


class _InputCoder:
    """Turns one input's slice of the parameter vector into a discrete measure."""

    def __init__(self, spec: InputSpec, mode: str):
        self.spec = spec
        self.mode = mode
        self.n = spec.n_moments
        self.size = self.n + 1 if mode == EQUALITY else 2 * self.n + 1
        if mode == EQUALITY:
            self.unit = to_unit_interval(spec.moments())
            self.fixed = moments_to_canonical(self.unit)
            embed_free_parameters(self.fixed, np.full(self.n + 1, 0.5))  # fail early on boundary input
        else:
            self.boxes = [c.bounds for c in spec.constraints]

    def decode_moments(self, encoded: np.ndarray) -> tuple[MomentSequence, CanonicalSequence, bool]:
        """Unit-interval moments and their canonical moments from encoded values.

        Each moment lands in the intersection of its box (conditional on the
        lower-order moments already chosen) with the canonical-feasible band.
        When that intersection is empty the band point nearest the box is used
        and the decode is flagged infeasible.
        """
        l, w = self.spec.lower, self.spec.width
        unit: list[float] = []
        canon: list[float] = []
        feasible = True
        for j in range(1, self.n + 1):
            c_minus, c_plus = next_moment_range(canon)
            span = c_plus - c_minus
            band_lo, band_hi = c_minus + GAMMA_EPS * span, c_plus - GAMMA_EPS * span
            # E[y^j] = sum_k C(j,k) l^(j-k) w^k c'_k with y = l + w x
            rest = l**j + sum(comb(j, k) * l ** (j - k) * w**k * unit[k - 1] for k in range(1, j))
            a, b = self.boxes[j - 1]
            box_lo, box_hi = (a - rest) / w**j, (b - rest) / w**j
            lo, hi = max(box_lo, band_lo), min(box_hi, band_hi)
            if lo <= hi:
                c = lo + float(encoded[j - 1]) * (hi - lo)
            else:
                feasible = False
                c = band_hi if box_lo > band_hi else band_lo
            p = min(max((c - c_minus) / span, GAMMA_EPS), 1.0 - GAMMA_EPS)
            unit.append(c)
            canon.append(p)
        return MomentSequence(tuple(unit)), CanonicalSequence(tuple(canon)), feasible

    def decode(self, params: np.ndarray) -> tuple[DiscreteMeasure, bool]:
        if self.mode == EQUALITY:
            canon = embed_free_parameters(self.fixed, params)
            return measure_from_canonical(canon, self.unit, self.spec.lower, self.spec.upper), True
        unit, fixed, feasible = self.decode_moments(params[: self.n])
        canon = embed_free_parameters(fixed, params[self.n :])
        return measure_from_canonical(canon, unit, self.spec.lower, self.spec.upper), feasible


class PofObjective:
    """Callable ``params -> P(G(X) <= h)`` for an :class:`ObjectiveSpec`.

    Model outputs on the atom grid are cached per parameter vector, so the
    same vector can be scored at other thresholds for free.
    """

    def __init__(self, spec: ObjectiveSpec, cache_size: int = 512):
        self.spec = spec
        self.coders = [_InputCoder(s, spec.mode) for s in spec.inputs]
        self.dimension = sum(c.size for c in self.coders)
        self.evaluations = 0
        self._cache: OrderedDict[bytes, tuple[np.ndarray, np.ndarray, bool]] = OrderedDict()
        self._cache_size = cache_size

    def split(self, params) -> list[np.ndarray]:
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.dimension:
            raise ValueError(f"expected {self.dimension} parameters, got {params.size}")
        out, start = [], 0
        for c in self.coders:
            out.append(params[start : start + c.size])
            start += c.size
        return out

    def measure(self, params) -> tuple[ProductMeasure, bool]:
        parts = [c.decode(p) for c, p in zip(self.coders, self.split(params))]
        return ProductMeasure(tuple(m for m, _ in parts)), all(ok for _, ok in parts)

    def grid_values(self, params) -> tuple[np.ndarray, np.ndarray, bool]:
        """Model outputs and product weights on the atom grid of ``params``."""
        key = np.asarray(params, dtype=float).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        measure, feasible = self.measure(params)
        points, weights = measure.grid()
        values = self.spec.model.evaluate(points)
        self.evaluations += len(points)
        entry = (values, weights, feasible)
        self._cache[key] = entry
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return entry

    def at(self, params, h):
        """Probability of failure at threshold(s) ``h``; undecodable vectors score 1."""
        values, weights, feasible = self.grid_values(params)
        if not feasible:
            return 1.0 if np.ndim(h) == 0 else np.ones(np.shape(h))
        return grid_cdf(values, weights, h)

    def __call__(self, params) -> float:
        return self.at(params, self.spec.threshold)

    def at_threshold(self, h: float) -> "ThresholdObjective":
        return ThresholdObjective(self, float(h))


@dataclass(frozen=True)
class ThresholdObjective:
    """Same objective at another threshold, sharing the parent's cache."""

    parent: PofObjective
    threshold: float

    @property
    def dimension(self) -> int:
        return self.parent.dimension

    def __call__(self, params) -> float:
        return self.parent.at(params, self.threshold)


def pof(spec: ObjectiveSpec, params) -> float:
    """Probability ``P(G(X) <= h)`` under the product measure indexed by ``params``."""
    return PofObjective(spec)(params)


@dataclass
class PofMinimum:
    value: float
    measure: ProductMeasure
    report: SolverReport
    params: np.ndarray


def minimize_pof(
    spec: ObjectiveSpec,
    solver: SolverConfig = SolverConfig(),
    init: np.ndarray | None = None,
    objective: PofObjective | None = None,
    target: float | None = None,
) -> PofMinimum:
    """Smallest probability of failure over the moment class, by DE.

    ``objective`` lets callers share one grid cache across thresholds; its
    inputs and model must match ``spec``.  ``target`` stops the search once
    a probability below it is found.
    """
    objective = objective or PofObjective(spec)
    view = objective.at_threshold(spec.threshold)
    x, value, report = differential_evolution(view, objective.dimension, solver, init=init, lower_bound=0.0, target=target)
    measure, _ = objective.measure(x)
    return PofMinimum(value, measure, report, x)
