"""Exception types shared across the package."""


class QuasispecError(Exception):
    pass


class WindowError(QuasispecError):
    """A requested interval is not covered by the measure's window."""


class InsufficientWindowError(QuasispecError, ValueError):
    """A symbolic word is too short for the requested statistic."""


class NumericError(QuasispecError, ArithmeticError):
    """A non-finite value appeared during propagation."""


class TruncationError(QuasispecError):
    """A Weyl disk did not contract below the requested radius."""


class ConfigError(QuasispecError, ValueError):
    pass
