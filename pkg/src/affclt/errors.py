"""Exception types shared across the package."""


class AffcltError(Exception):
    """Base class for package errors."""


class NotPositiveDefinite(AffcltError):
    """Symmetrized normalization matrix has an eigenvalue at or below the floor.

    Raised instead of clipping: a near-singular normalization signals
    mis-specified affinity sets and must be visible to the caller.
    """

    def __init__(self, min_eig: float, floor: float):
        self.min_eig = min_eig
        self.floor = floor
        super().__init__(
            f"smallest eigenvalue {min_eig:.6g} is at or below the floor {floor:.6g}; "
            "refusing to whiten"
        )


class MissingPairError(AffcltError):
    """Covariance kernel does not cover a pair required by the affinity map."""

    def __init__(self, pair):
        self.pair = pair
        super().__init__(f"kernel does not cover the pair {pair}")


class ShapeMismatch(AffcltError):
    """Replications disagree on (n, p) or model identity."""


class InsufficientReplications(AffcltError):
    """Too few replications for the requested estimator."""


class ParameterError(AffcltError):
    """Model or recipe parameter outside its valid range."""


class ConfigError(AffcltError):
    """Experiment configuration failed validation."""
