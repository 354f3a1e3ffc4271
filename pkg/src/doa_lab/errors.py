"""Exception types shared across the package."""


class SeparationError(ValueError):
    """A spike eigenvalue is not separated from the noise bulk.

    ``index`` is the 0-based position of the first offending spike.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateCurvatureError(ValueError):
    """The cost function curvature at a true DoA is too small for a CLT prediction."""


class ThresholdNotFound(LookupError):
    """No threshold transition inside the swept SNR range."""


class UnsupportedMethodError(ValueError):
    """The requested estimator does not support this operation."""
