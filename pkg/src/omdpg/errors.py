"""Exception types shared across the package."""


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class NumericalError(FloatingPointError):
    """Raised when a loss, gradient or parameter stops being finite.

    ``diagnostics`` carries whatever context the raiser had at hand; the
    training harness dumps it next to the run output before exiting.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NotReady(RuntimeError):
    """The replay buffer holds fewer transitions than requested."""
