"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Shapes or variants of the inputs do not fit together."""


class NumericalError(ArithmeticError):
    """An evaluation produced NaN; carries the offending index when known."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class DomainError(ValueError):
    """A point sits outside (or on the boundary of) the required domain."""


class ConfigError(ValueError):
    """An unsupported or inconsistent configuration was requested."""


class DegenerateGeometryError(ConfigError):
    """A Bregman geometry degenerated (e.g. a zero weight)."""


class GenerationError(RuntimeError):
    """Instance generation failed to produce a feasible draw."""


class IntegrityError(RuntimeError):
    """A result contradicts a construction guarantee (e.g. beats a known optimum)."""


class DegenerateScaleError(ValueError):
    """A normalization scale is zero or negative."""


class StepError(RuntimeError):
    """A coordinate subproblem failed inside a solver step."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index
