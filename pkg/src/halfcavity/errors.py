"""Exception hierarchy shared by all halfcavity modules."""


class HalfCavityError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HalfCavityError, ValueError):
    """Invalid or incomplete configuration."""


class QuantumNumberError(HalfCavityError, ValueError):
    """Angular momentum quantum numbers outside their allowed domain."""


class GridError(HalfCavityError, ValueError):
    """Time grid is non-uniform, too short, or otherwise unusable."""


class NumericalError(HalfCavityError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class NonUniqueSteadyStateError(NumericalError):
    def __init__(self, null_dim: int):
        self.null_dim = null_dim
        super().__init__(
            f"non-unique steady state: Liouvillian null space has dimension {null_dim} "
            "(dark-state manifold?); change polarizations, detunings or B field"
        )


class NoEmissionError(NumericalError):
    """Collapse requested on a state with no population that can emit."""


class NormalizationError(HalfCavityError, ValueError):
    """Curve cannot be normalized in the requested mode."""
