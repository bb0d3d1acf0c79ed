"""Exception types shared across the toolkit."""


class InputError(ValueError):
    """Bad arguments or malformed inputs (dimension mismatches, invalid indices)."""


class ParseError(ValueError):
    """Malformed file contents. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FitError(RuntimeError):
    """Solver failed to converge. ``best`` holds the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class RankDeficientError(RuntimeError):
    """Least-squares system is rank deficient in directions that matter.

    ``null_directions`` is a (k, n) array of unit vectors spanning the
    (near-)null space of the system matrix.
    """

    def __init__(self, message, null_directions=None):
        super().__init__(message)
        self.null_directions = null_directions


class GenerationError(RuntimeError):
    """A synthetic scenario is physically inconsistent (e.g. force needed in flight)."""


class ConvergenceWarning(UserWarning):
    """Optimization stopped early or a clamped quantity hit its bounds."""
