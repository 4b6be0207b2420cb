"""Exception hierarchy shared across the toolkit."""


class SizingError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SizingError, ValueError):
    """An input lies outside the domain of an operation."""


class SchemaError(SizingError, ValueError):
    """Names, order, units or shape do not match the expected schema."""


class OscillationFailure(SizingError):
    """The VCO cross-coupled pair cannot sustain oscillation (gm*R_p < 1)."""


class SimulationFailure(SizingError):
    """A forward simulation could not produce specifications."""


class ConvergenceError(SizingError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class TrainingDivergence(SizingError):
    """Training produced a non-finite loss."""


class ModelFormatError(SizingError):
    """A saved model file is corrupt, truncated or of an unsupported version."""


class ModelKindError(ModelFormatError):
    """A saved model holds a different regressor kind than requested."""
