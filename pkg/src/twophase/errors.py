"""Exception hierarchy shared by all modules."""


class TwoPhaseError(Exception):
    """Base class for every error raised by the package."""


class DomainError(TwoPhaseError, ValueError):
    """An argument lies outside the domain of an operation."""


class EmptyInteriorError(DomainError):
    """An erosion or construction would leave a body without interior."""


class DegenerateLevelSetError(TwoPhaseError):
    """The level-set gradient vanishes where a normal is required."""


class ProjectionError(TwoPhaseError):
    """Closest-point projection onto the interface did not converge."""


class InconsistentSurfaceVelocityError(TwoPhaseError):
    """A surface velocity does not move with the interface normal speed."""


class NoOneSidedLimitError(TwoPhaseError):
    """One-sided limits at the interface could not be extrapolated."""


class ClosureUndefinedError(TwoPhaseError):
    """An interface closure relation is undefined for the given parameters."""


class UnknownScenarioError(TwoPhaseError, KeyError):
    """A scenario name is not in the catalog."""


class TransversalityError(TwoPhaseError):
    """The boundary of a region meets the interface non-transversally."""


class WrongTheoremError(TwoPhaseError):
    """A transport identity was requested outside its hypotheses."""


class InconsistentScenarioError(TwoPhaseError):
    """A scenario violates a balance it is declared to satisfy."""


class ConfigError(TwoPhaseError):
    """A run configuration is malformed or out of range."""
