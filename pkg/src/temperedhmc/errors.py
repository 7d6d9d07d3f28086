"""Exception types shared across the package."""


class TemperingSingularityError(ValueError):
    """The target density vanished where a tempered metric needs it positive.

    Tempered metrics are powers of the density, so pi(theta) = 0 leaves
    G(theta) undefined.  Samplers convert this into a proposal rejection;
    clamping instead would silently break the volume constraint and
    reversibility.
    """


class IntegrationStepError(RuntimeError):
    """A single integrator step could not be completed.

    Raised when the linearly implicit half-kick system is (near-)singular,
    when a quantity became non-finite, or when a trajectory exceeded its
    step budget.  ``step_index`` locates the failure inside a multi-step
    integration (-1 when not applicable).
    """

    def __init__(self, message: str, step_index: int = -1):
        super().__init__(message)
        self.step_index = step_index


class ConfigError(ValueError):
    """An experiment configuration file is invalid."""
