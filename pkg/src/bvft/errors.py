"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions disagree with the MDP or partition they are paired with."""


class ParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class NumericalError(RuntimeError):
    """A linear solve or iteration failed its residual check."""


class CapacityError(RuntimeError):
    """An exhaustive search would exceed its configured size limit."""
