"""Exception types shared across the package."""


class RsPoseError(Exception):
    """Base class for all domain errors raised by this package."""


class NoRowFixpoint(RsPoseError):
    """The implicit row equation r = f(r) did not converge."""


class BehindCamera(RsPoseError):
    """Projected point has non-positive depth."""


class TooFewPoints(RsPoseError):
    """Fewer correspondences than the solver's contract minimum."""


class DegenerateConfiguration(RsPoseError):
    """Input geometry leaves the linear system rank deficient."""


class AllTripletsDegenerate(RsPoseError):
    """No 3-point subset produced a usable pose candidate."""


class NoValidHypothesis(RsPoseError):
    """Every RANSAC sample failed to produce a model."""


class GenerationExhausted(RsPoseError):
    """Synthetic scene generator ran out of retry budget."""


class CorrespondenceParseError(RsPoseError):
    """Malformed correspondence file; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number

    def __str__(self) -> str:
        message = super().__str__()
        if self.line_number is None:
            return message
        return f"line {self.line_number}: {message}"
