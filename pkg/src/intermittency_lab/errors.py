"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a precondition (bad shapes, caps, configs)."""


class HorizonError(ValidationError):
    """Requested times exceed what the finite truncation represents faithfully."""


class SolverError(RuntimeError):
    """A numerical solve failed or missed its residual target."""
