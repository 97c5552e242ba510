"""Data of the river flood test case: input distributions and moment constraints.

Inputs are ordered ``(Q, Ks, Zv, Zm)``: annual maximum flow rate,
Manning-Strickler coefficient, downstream and upstream river bed levels.
"""

from __future__ import annotations

from .baseline import DistributionSpec, distribution_moments
from .canonical import InputSpec

NAMES = ("Q", "Ks", "Zv", "Zm")

BOUNDS = {
    "Q": (160.0, 3580.0),
    "Ks": (12.55, 47.45),
    "Zv": (49.0, 51.0),
    "Zm": (54.0, 55.0),
}

# published constraint values, rounded; see hydraulic_inputs for what is used
PRINTED_MOMENTS = {
    "Q": (1320.42, 2.1632e6, 4.18e9),
    "Ks": (30.0, 949.0, 31422.0),
    "Zv": (50.0, 2500.0, 125050.0),
    "Zm": (54.5, 2970.0, 161892.0),
}


def distributions(truncated: bool = True) -> dict[str, DistributionSpec]:
    """Initial input distributions, truncated to the bounds by default."""
    raw = {
        "Q": ("gumbel", (1013.0, 558.0)),
        "Ks": ("normal", (30.0, 7.5)),
        "Zv": ("uniform", (49.0, 51.0)),
        "Zm": ("uniform", (54.0, 55.0)),
    }
    return {
        name: DistributionSpec(fam, params, BOUNDS[name] if truncated else None)
        for name, (fam, params) in raw.items()
    }


def hydraulic_inputs(n_moments: int, relax: float | None = None) -> list[InputSpec]:
    """Equality constraints of orders ``1..n_moments`` from the truncated distributions.

    Moments are recomputed by quadrature instead of taken from the rounded
    table, so the initial distributions belong to the moment class exactly.
    ``relax`` turns each value ``c`` into the interval ``c +- relax*|c|``.
    """
    if not 1 <= n_moments <= 3:
        raise ValueError("the test case defines constraints of order 1 to 3")
    specs = []
    for name, dist in distributions().items():
        lo, hi = BOUNDS[name]
        spec = InputSpec.from_moments(lo, hi, distribution_moments(dist, n_moments).values, name=name)
        specs.append(spec.relaxed(relax) if relax is not None else spec)
    return specs
