"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteInputError(ValueError):
    """An input contains NaN or infinite entries."""


class ValidationError(ValueError):
    """A record, descriptor, or config violates its schema.

    ``field`` holds a dotted path into the offending structure when known,
    e.g. ``"dims.d_model"`` or ``"scenarios[3].category"``.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DivergenceError(RuntimeError):
    """The sampled latent became non-finite. ``step`` is the failing step index."""

    def __init__(self, step: int):
        super().__init__(f"latent diverged (non-finite entries) at step {step}")
        self.step = step
