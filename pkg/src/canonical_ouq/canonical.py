"""Classical and canonical moments of measures on a bounded interval.

The n-th canonical moment ``p_n`` is the relative position of ``c_n`` inside
the range of values it can take once ``c_1 .. c_{n-1}`` are fixed.  Canonical
moments are affine invariant, so all heavy lifting happens on ``[0, 1]``.

Conversion goes through the three-term recurrence of the monic orthogonal
polynomials of the measure.  With ``zeta_1 = p_1`` and
``zeta_n = (1 - p_{n-1}) p_n`` the recurrence coefficients are::

    alpha_k = zeta_{2k} + zeta_{2k+1}        (zeta_0 = 0)
    beta_k  = zeta_{2k-1} zeta_{2k}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundaryMoments, InfeasibleMoments

BOUNDARY_TOL = 1e-10
GAMMA_EPS = 1e-9


@dataclass(frozen=True)
class MomentConstraint:
    """Constraint on ``E[x**order]``: either an exact value or an interval."""

    order: int
    value: float | None = None
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"moment order must be >= 1, got {self.order}")
        if self.value is None:
            if self.lo is None or self.hi is None:
                raise ValueError(f"order {self.order}: need a value or both interval ends")
            if not self.lo < self.hi:
                raise ValueError(
                    f"order {self.order}: interval requires lo < hi, got [{self.lo}, {self.hi}]"
                )
        elif self.lo is not None or self.hi is not None:
            raise ValueError(f"order {self.order}: give either a value or an interval, not both")

    @classmethod
    def equality(cls, order: int, value: float) -> "MomentConstraint":
        return cls(order, value=float(value))

    @classmethod
    def interval(cls, order: int, lo: float, hi: float) -> "MomentConstraint":
        return cls(order, lo=float(lo), hi=float(hi))

    @property
    def is_equality(self) -> bool:
        return self.value is not None

    @property
    def bounds(self) -> tuple[float, float]:
        if self.is_equality:
            return self.value, self.value
        return self.lo, self.hi


@dataclass(frozen=True)
class InputSpec:
    """Range ``[lower, upper]`` of one input plus its moment constraints."""

    lower: float
    upper: float
    constraints: tuple[MomentConstraint, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError(f"input {self.name!r}: bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"input {self.name!r}: need lower < upper, got [{self.lower}, {self.upper}]")
        if not self.constraints:
            raise ValueError(f"input {self.name!r}: at least one moment constraint is required")
        orders = [c.order for c in self.constraints]
        if orders != list(range(1, len(orders) + 1)):
            raise ValueError(f"input {self.name!r}: constraint orders must be 1..N, got {orders}")

    @classmethod
    def from_moments(cls, lower, upper, moments: Iterable[float], name: str = "") -> "InputSpec":
        cons = [MomentConstraint.equality(j, c) for j, c in enumerate(moments, start=1)]
        return cls(float(lower), float(upper), tuple(cons), name)

    @classmethod
    def from_intervals(cls, lower, upper, intervals, name: str = "") -> "InputSpec":
        cons = [MomentConstraint.interval(j, lo, hi) for j, (lo, hi) in enumerate(intervals, start=1)]
        return cls(float(lower), float(upper), tuple(cons), name)

    @property
    def n_moments(self) -> int:
        return len(self.constraints)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def is_equality(self) -> bool:
        return all(c.is_equality for c in self.constraints)

    def moments(self) -> "MomentSequence":
        if not self.is_equality:
            raise ValueError(f"input {self.name!r} has interval constraints")
        return MomentSequence(tuple(c.value for c in self.constraints), self.lower, self.upper)

    def relaxed(self, fraction: float) -> "InputSpec":
        """Replace every equality ``c`` by the interval ``c +- fraction*|c|``."""
        cons = []
        for c in self.constraints:
            if not c.is_equality:
                raise ValueError("only equality constraints can be relaxed")
            half = abs(c.value) * fraction
            cons.append(MomentConstraint.interval(c.order, c.value - half, c.value + half))
        return InputSpec(self.lower, self.upper, tuple(cons), self.name)


@dataclass(frozen=True)
class MomentSequence:
    """Raw moments ``c_1 .. c_k`` of a measure on ``[lower, upper]``."""

    values: tuple[float, ...]
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self):
        return len(self.values)

    @property
    def is_unit(self) -> bool:
        return self.lower == 0.0 and self.upper == 1.0

    def with_mass(self) -> np.ndarray:
        return np.array((1.0,) + self.values)


@dataclass(frozen=True)
class CanonicalSequence:
    """Canonical moments ``p_1 .. p_k``.

    A sequence is stored only up to its first boundary value (0 or 1); past it
    the measure is fully determined.
    """

    values: tuple[float, ...]
    zetas: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        for j, p in enumerate(vals):
            if not -BOUNDARY_TOL <= p <= 1 + BOUNDARY_TOL:
                raise ValueError(f"canonical moment p_{j + 1} = {p} outside [0, 1]")
            if _on_boundary(p) and j != len(vals) - 1:
                raise ValueError(f"p_{j + 1} = {p} is a boundary value but is not the last entry")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "zetas", tuple(zetas_from_canonical(vals)))

    def __len__(self):
        return len(self.values)

    @property
    def is_interior(self) -> bool:
        return not any(_on_boundary(p) for p in self.values)

    @property
    def is_boundary_terminated(self) -> bool:
        return bool(self.values) and _on_boundary(self.values[-1])


def _on_boundary(p: float) -> bool:
    return p <= BOUNDARY_TOL or p >= 1 - BOUNDARY_TOL


def zetas_from_canonical(p: Sequence[float]) -> list[float]:
    zetas = []
    q_prev = 1.0
    for pn in p:
        zetas.append(q_prev * pn)
        q_prev = 1.0 - pn
    return zetas


def recurrence_from_zetas(zetas: Sequence[float]) -> tuple[list[float], list[float]]:
    """Recurrence coefficients ``alpha_0..`` and ``beta_1..`` on ``[0, 1]``.

    Only coefficients fully determined by the available ``zeta`` values are
    returned: ``alpha_k`` needs ``zeta_{2k+1}``, ``beta_k`` needs ``zeta_{2k}``.
    """
    z = [0.0] + list(zetas)  # z[n] = zeta_n
    k_max = len(zetas)
    alphas = [z[2 * k] + z[2 * k + 1] for k in range((k_max + 1) // 2)]
    betas = [z[2 * k - 1] * z[2 * k] for k in range(1, k_max // 2 + 1)]
    return alphas, betas


def _affine_moments(values: Sequence[float], shift: float, scale: float) -> list[float]:
    """Moments of ``(x - shift) / scale`` from the moments of ``x``.

    Evaluated in exact rational arithmetic: the binomial sum cancels badly when
    the interval sits far from the origin relative to its width.
    """
    c = [Fraction(1)] + [Fraction(float(v)) for v in values]
    s, w = Fraction(float(shift)), Fraction(float(scale))
    out = []
    for j in range(1, len(c)):
        acc = sum(comb(j, k) * (-s) ** (j - k) * c[k] for k in range(j + 1))
        out.append(float(acc / w**j))
    return out


def to_unit_interval(moments: MomentSequence) -> MomentSequence:
    """Map moments of a measure on ``[l, u]`` to those of its image on ``[0, 1]``.

    Uses ``x = (y - l) / (u - l)`` and the binomial expansion of ``(y - l)**j``.
    """
    l, u = moments.lower, moments.upper
    if not l < u:
        raise ValueError(f"need lower < upper, got [{l}, {u}]")
    if not len(moments):
        raise ValueError("empty moment sequence")
    if moments.is_unit:
        return moments
    return MomentSequence(tuple(_affine_moments(moments.values, l, u - l)), 0.0, 1.0)


def from_unit_interval(moments: MomentSequence, lower: float, upper: float) -> MomentSequence:
    """Inverse of :func:`to_unit_interval`."""
    if not moments.is_unit:
        raise ValueError("expected moments on [0, 1]")
    if lower == 0.0 and upper == 1.0:
        return moments
    c = [Fraction(1)] + [Fraction(v) for v in moments.values]
    l, w = Fraction(float(lower)), Fraction(float(upper)) - Fraction(float(lower))
    out = []
    for j in range(1, len(c)):
        out.append(float(sum(comb(j, k) * l ** (j - k) * w**k * c[k] for k in range(j + 1))))
    return MomentSequence(tuple(out), lower, upper)


def _chebyshev_recurrence(c: np.ndarray) -> tuple[list[float], list[float]]:
    """Modified Chebyshev algorithm for monomial moments ``c_0 .. c_k``.

    Stops early if the measure turns out to be degenerate (zero norm).
    """
    k = len(c) - 1
    alphas: list[float] = []
    betas: list[float] = []
    if k < 1:
        return alphas, betas
    sig_prev = np.zeros(k + 1)
    sig = np.array(c, dtype=float)
    alphas.append(sig[1] / sig[0])
    j = 1
    while 2 * j <= k:
        beta_prev = betas[-1] if betas else 0.0
        new = np.zeros(k + 1)
        for l in range(j, k - j + 1):
            new[l] = sig[l + 1] - alphas[j - 1] * sig[l] - beta_prev * sig_prev[l]
        if sig[j - 1] == 0.0:
            break
        betas.append(new[j] / sig[j - 1])
        if 2 * j + 1 <= k:
            if new[j] == 0.0:
                break
            alphas.append(new[j + 1] / new[j] - sig[j] / sig[j - 1])
        sig_prev, sig = sig, new
        j += 1
    return alphas, betas


def _check_canonical(p: float, index: int, remaining: int) -> float:
    if p < -BOUNDARY_TOL or p > 1 + BOUNDARY_TOL or not np.isfinite(p):
        raise InfeasibleMoments(f"canonical moment p_{index} = {p:.6g} lies outside [0, 1]")
    if _on_boundary(p):
        if remaining:
            raise BoundaryMoments(
                f"p_{index} = {p:.6g} is on the boundary of the moment space; "
                f"the measure is unique and {remaining} further constraint(s) cannot be imposed"
            )
        return 0.0 if p < 0.5 else 1.0
    return p


def moments_to_canonical(moments: MomentSequence) -> CanonicalSequence:
    """Canonical moments of a moment sequence.

    Moments given on an interval other than ``[0, 1]`` are mapped there first.

    Raises
    ------
    InfeasibleMoments
        Some ``p_j`` falls outside ``[0, 1]``.
    BoundaryMoments
        Some ``p_j`` is 0 or 1 while further moments follow.
    """
    unit = to_unit_interval(moments)
    k = len(unit)
    alphas, betas = _chebyshev_recurrence(unit.with_mass())
    p: list[float] = []
    zetas: list[float] = []
    for n in range(1, k + 1):
        if n % 2:
            m = (n - 1) // 2
            zeta = alphas[m] - (zetas[-1] if zetas else 0.0)
        else:
            zeta = betas[n // 2 - 1] / zetas[-1]
        q_prev = 1.0 - p[-1] if p else 1.0
        pn = _check_canonical(zeta / q_prev, n, k - n)
        p.append(pn)
        zetas.append(q_prev * pn)
    return CanonicalSequence(tuple(p))


def canonical_to_moments(canon: CanonicalSequence | Sequence[float]) -> MomentSequence:
    """Raw moments on ``[0, 1]`` of a canonical sequence.

    ``c_n`` is the ``(0, 0)`` entry of ``J**n`` where ``J`` is the tridiagonal
    recurrence matrix; coefficients not fixed by the sequence never reach that
    entry for ``n <= len(canon)``.
    """
    if not isinstance(canon, CanonicalSequence):
        canon = CanonicalSequence(tuple(canon))
    k = len(canon)
    alphas, betas = recurrence_from_zetas(canon.zetas)
    size = k // 2 + 1
    diag = np.zeros(size)
    diag[: len(alphas)] = alphas[:size]
    sub = np.zeros(size - 1)
    sub[: min(len(betas), size - 1)] = betas[: size - 1]
    v = np.zeros(size)
    v[0] = 1.0
    out = []
    for _ in range(k):
        nv = diag * v
        nv[:-1] += sub * v[1:]  # J[j, j+1] = beta_{j+1}
        nv[1:] += v[:-1]  # J[j+1, j] = 1
        v = nv
        out.append(float(v[0]))
    return MomentSequence(tuple(out))


def next_moment_range(prefix: CanonicalSequence | Sequence[float]) -> tuple[float, float]:
    """``(c_{k+1}^-, c_{k+1}^+)`` on ``[0, 1]`` given canonical moments ``p_1..p_k``."""
    vals = tuple(prefix.values if isinstance(prefix, CanonicalSequence) else prefix)
    lo = canonical_to_moments(CanonicalSequence(vals + (0.0,))).values[-1]
    hi = canonical_to_moments(CanonicalSequence(vals + (1.0,))).values[-1]
    return lo, hi


def embed_free_parameters(fixed: CanonicalSequence, gamma) -> CanonicalSequence:
    """Append ``N + 1`` free canonical moments to ``N`` constrained ones.

    The result ``(p_1..p_N, gamma_1..gamma_{N+1})`` indexes one discrete
    measure with at most ``N + 1`` atoms matching the constraints.
    """
    if not fixed.is_interior:
        raise BoundaryMoments("constrained canonical moments must lie strictly inside (0, 1)")
    gamma = np.asarray(gamma, dtype=float).ravel()
    n = len(fixed)
    if gamma.size != n + 1:
        raise ValueError(f"expected {n + 1} free parameters, got {gamma.size}")
    if np.any(gamma < GAMMA_EPS) or np.any(gamma > 1 - GAMMA_EPS) or not np.all(np.isfinite(gamma)):
        raise ValueError(f"free parameters must lie in [{GAMMA_EPS}, {1 - GAMMA_EPS}], got {gamma}")
    return CanonicalSequence(fixed.values + tuple(gamma.tolist()))
