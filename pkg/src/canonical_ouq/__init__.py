"""Worst-case quantiles of a black-box model over moment classes.

Each input is known only through its range and a few moments.  Discrete
extremal measures are indexed by free canonical moments, so the worst-case
probability of failure is an unconstrained optimization over a unit cube.
"""

from .baseline import DistributionSpec, EmpiricalCdf, bootstrap_ci, distribution_moments, empirical_quantile, sample
from .canonical import (
    CanonicalSequence,
    InputSpec,
    MomentConstraint,
    MomentSequence,
    canonical_to_moments,
    embed_free_parameters,
    from_unit_interval,
    moments_to_canonical,
    to_unit_interval,
)
from .envelope import EnvelopeCurve, QuantileResult, lower_envelope, max_quantile
from .errors import (
    BoundaryMoments,
    BracketingFailure,
    ConfigError,
    InfeasibleMoments,
    ModelError,
    NegativeWeight,
    OUQError,
    ProtocolError,
    RootFindingFailure,
)
from .models import ExternalModel, ExternalModelConfig, Model, builtin_model, external_batch_eval, hydraulic_eval
from .objective import EQUALITY, INEQUALITY, ObjectiveSpec, PofObjective, ProductMeasure, minimize_pof, pof
from .reconstruction import (
    DiscreteMeasure,
    SupportPolynomial,
    polynomial_roots,
    reconstruct_measure,
    support_polynomial,
    weights_from_moments,
)
from .solver import SolverConfig, brute_force_grid, differential_evolution

__version__ = "0.1.0"
