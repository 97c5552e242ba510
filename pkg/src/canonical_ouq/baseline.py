"""Monte Carlo baseline: named distributions, empirical quantiles, bootstrap CIs.

Also computes the moments of (truncated) distributions, which is how the
constraint sets of the hydraulic case are generated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .canonical import MomentSequence
from .errors import ConfigError, QuadratureFailure

FAMILIES = ("gumbel", "normal", "uniform", "lognormal")


@dataclass(frozen=True)
class DistributionSpec:
    """A named one-dimensional distribution, optionally truncated.

    Parameters by family: ``gumbel(mode, scale)``, ``normal(mean, sd)``,
    ``uniform(a, b)``, ``lognormal(logmean, logsd)``.
    """

    family: str
    params: tuple[float, float]
    truncation: tuple[float, float] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown distribution family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if len(self.params) != 2:
            raise ConfigError(f"{self.family} takes 2 parameters, got {len(self.params)}")
        a, b = self.params
        if self.family == "uniform" and not a < b:
            raise ConfigError("uniform(a, b) needs a < b")
        if self.family != "uniform" and not b > 0:
            raise ConfigError(f"{self.family} scale parameter must be positive")
        if self.truncation is not None:
            lo, hi = (float(v) for v in self.truncation)
            object.__setattr__(self, "truncation", (lo, hi))
            s_lo, s_hi = self.support()
            if not lo < hi:
                raise ConfigError(f"truncation needs lo < hi, got [{lo}, {hi}]")
            if lo < s_lo or hi > s_hi:
                raise ConfigError(f"truncation [{lo}, {hi}] leaves the support [{s_lo}, {s_hi}]")

    def frozen(self):
        a, b = self.params
        if self.family == "gumbel":
            return stats.gumbel_r(loc=a, scale=b)
        if self.family == "normal":
            return stats.norm(loc=a, scale=b)
        if self.family == "uniform":
            return stats.uniform(loc=a, scale=b - a)
        return stats.lognorm(s=b, scale=math.exp(a))

    def support(self) -> tuple[float, float]:
        if self.family == "uniform":
            return self.params
        if self.family == "lognormal":
            return 0.0, math.inf
        return -math.inf, math.inf

    def bounds(self) -> tuple[float, float]:
        """Truncation interval, or the support when untruncated."""
        return self.truncation if self.truncation is not None else self.support()


def sample(spec: DistributionSpec, n: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """``n`` i.i.d. draws by inverse CDF; truncation restricts ``U`` to ``[F(lo), F(hi)]``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    dist = spec.frozen()
    if spec.truncation is None:
        u_lo, u_hi = 0.0, 1.0
    else:
        u_lo, u_hi = (float(v) for v in dist.cdf(spec.truncation))
    u = u_lo + (u_hi - u_lo) * rng.random(n)
    if spec.family == "gumbel":
        mode, scale = spec.params
        with np.errstate(divide="ignore"):
            x = mode - scale * np.log(-np.log(u))
    else:
        x = dist.ppf(u)
    if spec.truncation is not None:
        x = np.clip(x, *spec.truncation)
    return x


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous empirical CDF of a sample."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if not v.size:
            raise ValueError("empty sample")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def __call__(self, h):
        return np.searchsorted(self.values, h, side="right") / self.n


def empirical_quantile(cdf: EmpiricalCdf | np.ndarray, p: float) -> float:
    """Order statistic of rank ``ceil(n p)``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if not isinstance(cdf, EmpiricalCdf):
        cdf = EmpiricalCdf(cdf)
    rank = max(math.ceil(cdf.n * p), 1)
    return float(cdf.values[rank - 1])


def bootstrap_ci(
    values, p: float, level: float = 0.9, n_boot: int = 1000, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap interval for the empirical ``p``-quantile."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if n_boot < 100:
        raise ValueError("need at least 100 bootstrap resamples")
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    k = max(math.ceil(n * p), 1) - 1
    rng = np.random.default_rng(seed)
    estimates = np.empty(n_boot)
    for b in range(n_boot):
        resample = x[rng.integers(0, n, n)]
        estimates[b] = np.partition(resample, k)[k]
    alpha = 1.0 - level
    lo, hi = np.quantile(estimates, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def distribution_moments(spec: DistributionSpec, n_moments: int) -> MomentSequence:
    """Raw moments of orders ``1..n_moments`` by adaptive quadrature.

    Truncated distributions are renormalized on their interval.  The
    returned sequence carries ``spec.bounds()`` as its interval.

    Raises
    ------
    QuadratureFailure
        Quadrature did not reach relative tolerance 1e-10 or the mass vanished.
    """
    if n_moments < 1:
        raise ValueError("n_moments must be >= 1")
    lo, hi = spec.bounds()
    dist = spec.frozen()
    if math.isfinite(lo) and math.isfinite(hi) and hi - lo <= 1e-12 * max(1.0, abs(lo)):
        return MomentSequence(tuple(lo**j for j in range(1, n_moments + 1)), lo, hi)

    def integral(f):
        with warnings.catch_warnings(), np.errstate(over="ignore"):
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=500)
            except integrate.IntegrationWarning as exc:
                raise QuadratureFailure(f"quadrature failed for {spec}: {exc}") from exc
        return val

    # centre and scale before integrating so the integrand stays O(1)
    loc, scale = float(dist.mean()), float(dist.std())
    sums = [integral(lambda x, j=j: ((x - loc) / scale) ** j * dist.pdf(x)) for j in range(n_moments + 1)]
    if not sums[0] > 0:
        raise QuadratureFailure(f"no probability mass on [{lo}, {hi}]")
    central = [v / sums[0] for v in sums]
    raw = []
    for j in range(1, n_moments + 1):
        raw.append(sum(math.comb(j, k) * loc ** (j - k) * scale**k * central[k] for k in range(j + 1)))
    return MomentSequence(tuple(raw), lo, hi)
