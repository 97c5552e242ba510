"""Exception hierarchy.

Every library error derives from :class:`OUQError` and carries the process
exit code the CLI reports for it.
"""

from __future__ import annotations


class OUQError(Exception):
    exit_code = 1


class ConfigError(OUQError, ValueError):
    exit_code = 2


class MomentError(OUQError):
    exit_code = 3


class InfeasibleMoments(MomentError):
    """A moment sequence lies outside the moment space of its interval."""


class BoundaryMoments(MomentError):
    """A moment sequence hits the boundary of the moment space before its end.

    The underlying measure is then unique, so trailing constraints are either
    redundant or contradictory and the free-parameter construction breaks down.
    """


class BracketingFailure(OUQError):
    exit_code = 4


class ModelError(OUQError):
    exit_code = 5


class ModelEvaluationError(ModelError):
    pass


class DomainError(ModelEvaluationError):
    pass


class ProtocolError(ModelError):
    pass


class ProcessExit(ModelError):
    pass


class ModelTimeout(ModelError, TimeoutError):
    pass


class NumericalError(OUQError):
    exit_code = 6


class ReconstructionError(NumericalError):
    pass


class RootFindingFailure(ReconstructionError):
    pass


class NegativeWeight(ReconstructionError):
    pass


class SingularSystem(ReconstructionError):
    pass


class QuadratureFailure(NumericalError):
    pass
