"""Exception hierarchy shared across the package."""


class FacexplainError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FacexplainError, ValueError):
    """Input data violates a documented precondition or schema."""


class DimensionMismatchError(ValidationError):
    """Arrays that must share a shape do not."""


class ActivationsUnsupportedError(FacexplainError):
    """The embedder handle does not expose intermediate activations."""


class ZeroNormError(FacexplainError, ValueError):
    """Cosine similarity requested for a zero-norm vector."""


class SingularSurrogateError(FacexplainError):
    """The surrogate least-squares system is rank deficient.

    Raised instead of returning garbage coefficients; the remedy is a larger
    ridge penalty or more perturbation samples.
    """


class ConfigValidationError(FacexplainError):
    """One or more problems found while validating a run configuration."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
