class ValidationError(ValueError):
    """Malformed input: wrong shape, non-Hermitian, invalid parameter."""


class IntegrationError(RuntimeError):
    """Time integration produced non-finite values."""

    def __init__(self, step: int, t: float, what: str = "state"):
        self.step = step
        self.t = t
        super().__init__(f"non-finite {what} at step {step} (t = {t:.6g})")


class InvariantError(RuntimeError):
    """A quantity that must be real or Hermitian came out otherwise."""
