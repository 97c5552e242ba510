"""Discrete measures from canonical moments.

A canonical sequence ``p_1..p_{2N+1}`` fixes the monic orthogonal polynomial of
degree ``N + 1``; its roots are the atoms of the unique measure with at most
``N + 1`` atoms carrying those canonical moments.  Weights then follow from
the first ``N`` moments through a Vandermonde system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal

from .canonical import (
    CanonicalSequence,
    InputSpec,
    MomentSequence,
    embed_free_parameters,
    moments_to_canonical,
    recurrence_from_zetas,
    to_unit_interval,
)
from .errors import NegativeWeight, ReconstructionError, RootFindingFailure, SingularSystem

MERGE_TOL = 1e-9
ROOT_SLACK = 1e-8
NEG_WEIGHT_TOL = 1e-8


@dataclass(frozen=True)
class SupportPolynomial:
    """Monic polynomial whose roots are the atoms of a measure on ``[lower, upper]``.

    ``coefficients`` are in increasing degree.  ``diagonal``/``offdiagonal``
    hold the symmetric tridiagonal (Jacobi) matrix whose characteristic
    polynomial it is, when known.
    """

    coefficients: np.ndarray
    lower: float
    upper: float
    diagonal: np.ndarray | None = None
    offdiagonal: np.ndarray | None = None

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return npoly.polyval(x, self.coefficients)


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "atoms", np.asarray(self.atoms, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.atoms.shape != self.weights.shape or self.atoms.ndim != 1:
            raise ValueError("atoms and weights must be 1-d arrays of equal length")

    def __len__(self):
        return self.atoms.size

    def moments(self, n: int) -> np.ndarray:
        """Raw moments of orders ``1..n``."""
        powers = self.atoms[None, :] ** np.arange(1, n + 1)[:, None]
        return powers @ self.weights

    def unit_moments(self, n: int) -> np.ndarray:
        x = (self.atoms - self.lower) / (self.upper - self.lower)
        return (x[None, :] ** np.arange(1, n + 1)[:, None]) @ self.weights

    def cdf(self, h: float) -> float:
        return float(self.weights[self.atoms <= h].sum())

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


def support_polynomial(canon: CanonicalSequence, lower: float = 0.0, upper: float = 1.0) -> SupportPolynomial:
    """Degree ``N + 1`` support polynomial for ``p_1..p_{2N+1}`` on ``[lower, upper]``.

    Runs ``P_{k+1} = (x - l - w (z_{2k} + z_{2k+1})) P_k - w^2 z_{2k-1} z_{2k} P_{k-1}``
    with ``P_{-1} = 0``, ``P_0 = 1`` and ``w = upper - lower``.
    """
    k = len(canon)
    if k % 2 != 1:
        raise ValueError(f"need an odd number of canonical moments, got {k}")
    w = upper - lower
    alphas, betas = recurrence_from_zetas(canon.zetas)
    diag = lower + w * np.asarray(alphas)
    off_sq = w * w * np.asarray(betas)
    # coefficient arrays in increasing degree, padded to a common length
    size = diag.size + 1
    p_prev = np.zeros(size)
    p_cur = np.zeros(size)
    p_cur[0] = 1.0
    for k_, a in enumerate(diag):
        b = off_sq[k_ - 1] if k_ > 0 else 0.0
        p_next = -a * p_cur - b * p_prev
        p_next[1:] += p_cur[:-1]
        p_prev, p_cur = p_cur, p_next
    return SupportPolynomial(
        coefficients=p_cur,
        lower=float(lower),
        upper=float(upper),
        diagonal=diag,
        offdiagonal=np.sqrt(np.clip(off_sq, 0.0, None)),
    )


def _eval_with_derivative(poly: SupportPolynomial, x):
    """``P(x)`` and ``P'(x)`` for a scalar or array ``x``."""
    if poly.diagonal is None:
        c = poly.coefficients
        return npoly.polyval(x, c), npoly.polyval(x, npoly.polyder(c))
    # three-term recurrence: better behaved than the monomial expansion
    x = np.asarray(x, dtype=float)
    p_prev, p_cur = np.zeros_like(x), np.ones_like(x)
    d_prev, d_cur = np.zeros_like(x), np.zeros_like(x)
    for k, a in enumerate(poly.diagonal):
        b = poly.offdiagonal[k - 1] ** 2 if k > 0 else 0.0
        p_next = (x - a) * p_cur - b * p_prev
        d_next = p_cur + (x - a) * d_cur - b * d_prev
        p_prev, p_cur = p_cur, p_next
        d_prev, d_cur = d_cur, d_next
    return p_cur, d_cur


def _residual_scale(poly: SupportPolynomial, x):
    x = np.asarray(x, dtype=float)
    return np.abs(x)[..., None] ** np.arange(poly.degree + 1) @ np.abs(poly.coefficients)


def polynomial_roots(poly: SupportPolynomial) -> np.ndarray:
    """All real roots of the support polynomial, sorted ascending.

    Eigenvalues of the Jacobi matrix when available, else of the companion
    matrix; the roots then get a guarded Newton polish.

    Raises
    ------
    RootFindingFailure
        A root is complex, falls outside the interval, or leaves a residual
        above tolerance.
    """
    deg = poly.degree
    if deg < 1:
        raise ValueError("polynomial must have degree >= 1")
    l, u = poly.lower, poly.upper
    w = u - l
    if poly.diagonal is not None and poly.diagonal.size == deg:
        if deg == 1:
            roots = np.array([poly.diagonal[0]])
        else:
            roots = eigvalsh_tridiagonal(poly.diagonal, poly.offdiagonal[: deg - 1])
    else:
        raw = npoly.polyroots(poly.coefficients)
        if np.any(np.abs(raw.imag) > 1e-7 * max(w, 1.0)):
            raise RootFindingFailure(f"complex roots found: {raw}")
        roots = np.sort(raw.real)

    roots = np.array(roots, dtype=float)
    # each root may only move inside the midpoints to its neighbours
    mids = 0.5 * (roots[1:] + roots[:-1])
    lo_guard = np.concatenate(([l - ROOT_SLACK * w], mids))
    hi_guard = np.concatenate((mids, [u + ROOT_SLACK * w]))
    active = np.ones(deg, dtype=bool)
    for _ in range(4):
        val, der = _eval_with_derivative(poly, roots)
        ok = active & (der != 0.0) & (val != 0.0)
        step = np.where(ok, val / np.where(der == 0.0, 1.0, der), 0.0)
        cand = roots - step
        ok &= (cand >= lo_guard) & (cand <= hi_guard)
        roots = np.where(ok, cand, roots)
        active = ok & (np.abs(step) > 1e-12 * np.maximum(np.abs(roots), w))
        if not active.any():
            break

    outside = (roots < l - ROOT_SLACK * w) | (roots > u + ROOT_SLACK * w)
    if outside.any():
        raise RootFindingFailure(f"root {roots[outside][0]!r} outside [{l}, {u}]")
    val, der = _eval_with_derivative(poly, roots)
    # residual small against the evaluation scale, or implied root error small
    scale = np.maximum(np.maximum(_residual_scale(poly, roots), w * np.abs(der)), 1e-300)
    bad = np.abs(val) > 1e-8 * scale
    if bad.any():
        i = int(np.argmax(bad))
        raise RootFindingFailure(f"residual {val[i]:.3e} too large at root {roots[i]!r}")
    return np.clip(roots, l, u)


def merge_atoms(atoms: np.ndarray, tol: float) -> np.ndarray:
    """Collapse runs of sorted atoms closer than ``tol`` onto their mean."""
    if atoms.size < 2:
        return atoms
    groups = [[atoms[0]]]
    for x in atoms[1:]:
        if x - groups[-1][-1] < tol:
            groups[-1].append(x)
        else:
            groups.append([x])
    if len(groups) == atoms.size:
        return atoms
    return np.array([np.mean(g) for g in groups])


def weights_from_moments(atoms, constraints: MomentSequence) -> np.ndarray:
    """Weights putting the first ``N`` moments of ``constraints`` on ``atoms``.

    Solves the Vandermonde system (mass one plus ``N`` moment equations) in
    unit-interval coordinates.  Slightly negative weights (>= -1e-8) are
    clamped to zero and the rest renormalized.
    """
    atoms = np.asarray(atoms, dtype=float)
    l, u = constraints.lower, constraints.upper
    x = (atoms - l) / (u - l)
    rhs = np.array((1.0,) + to_unit_interval(constraints).values) if len(constraints) else np.ones(1)
    n_eq = rhs.size
    if atoms.size > n_eq:
        raise ValueError(f"{atoms.size} atoms but only {n_eq} equations")
    if atoms.size > 1 and np.min(np.diff(np.sort(x))) < MERGE_TOL:
        raise SingularSystem("atoms coincide within merge tolerance")
    vander = x[None, :] ** np.arange(n_eq)[:, None]
    if atoms.size == n_eq:
        try:
            weights = np.linalg.solve(vander, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
    else:
        weights, *_ = np.linalg.lstsq(vander, rhs, rcond=None)
        if np.max(np.abs(vander @ weights - rhs)) > 1e-8:
            raise SingularSystem("merged atoms cannot reproduce the moment constraints")
    if np.any(weights < -NEG_WEIGHT_TOL):
        raise NegativeWeight(f"negative weights {weights}")
    weights = np.clip(weights, 0.0, None)
    return weights / weights.sum()


def gauss_weights(poly: SupportPolynomial) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights from the eigen-decomposition of the Jacobi matrix.

    The weights are the squared first components of the normalized
    eigenvectors (Golub-Welsch).  They coincide with the Vandermonde weights
    but stay accurate when atoms nearly coincide.
    """
    if poly.diagonal is None:
        raise ValueError("Jacobi matrix not available")
    if poly.degree == 1:
        return poly.diagonal.copy(), np.ones(1)
    nodes, vecs = eigh_tridiagonal(poly.diagonal, poly.offdiagonal[: poly.degree - 1])
    weights = vecs[0] ** 2
    return nodes, weights / weights.sum()


def _merge_weighted(nodes: np.ndarray, weights: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    atoms, masses = [nodes[0]], [weights[0]]
    for x, w in zip(nodes[1:], weights[1:]):
        if x - atoms[-1] < tol:
            total = masses[-1] + w
            atoms[-1] = (atoms[-1] * masses[-1] + x * w) / total if total > 0 else 0.5 * (atoms[-1] + x)
            masses[-1] = total
        else:
            atoms.append(x)
            masses.append(w)
    return np.array(atoms), np.array(masses)


def measure_from_canonical(
    canon: CanonicalSequence, constraints: MomentSequence, lower: float, upper: float
) -> DiscreteMeasure:
    """Atoms from a full interior canonical sequence, weights from ``constraints``.

    Everything is computed on ``[0, 1]`` and mapped back to ``[lower, upper]``.
    Weights come from the Vandermonde system; when it is too ill-conditioned
    to return nonnegative weights (atoms a hair apart), the Jacobi-matrix
    weights are used instead.
    """
    poly = support_polynomial(canon, 0.0, 1.0)
    roots = merge_atoms(polynomial_roots(poly), MERGE_TOL)
    unit = to_unit_interval(constraints) if len(constraints) else MomentSequence(())
    try:
        weights = weights_from_moments(roots, unit)
    except ReconstructionError:
        nodes, gw = gauss_weights(poly)
        roots, weights = _merge_weighted(np.clip(nodes, 0.0, 1.0), gw, MERGE_TOL)
    return DiscreteMeasure(lower + (upper - lower) * roots, weights, lower, upper)


def reconstruct_measure(spec: InputSpec, gamma, fixed: CanonicalSequence | None = None) -> DiscreteMeasure:
    """Discrete measure in the moment class of ``spec`` indexed by ``gamma``.

    ``fixed`` may carry the precomputed canonical moments of the constraints.
    """
    moments = spec.moments()
    unit = to_unit_interval(moments)
    if fixed is None:
        fixed = moments_to_canonical(unit)
    canon = embed_free_parameters(fixed, gamma)
    return measure_from_canonical(canon, unit, spec.lower, spec.upper)
