"""Exception hierarchy shared by all modules."""


class SparseTrackingError(Exception):
    """Base class for every error raised by this package."""


class ParseError(SparseTrackingError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SparseTrackingError, ValueError):
    pass


class InsufficientDataError(SparseTrackingError, ValueError):
    pass


class DegenerateAssetError(SparseTrackingError, ValueError):
    def __init__(self, asset):
        self.asset = asset
        super().__init__(f"asset {asset!r} has zero weighted variance")


class ParameterError(SparseTrackingError, ValueError):
    pass


class FeasibilityError(SparseTrackingError, ValueError):
    pass


class MoveError(SparseTrackingError, ValueError):
    pass


class CapacityError(SparseTrackingError, ValueError):
    def __init__(self, n_combinations, limit):
        self.n_combinations = n_combinations
        self.limit = limit
        super().__init__(
            f"exact enumeration needs {n_combinations} combinations (limit {limit})"
        )


class ConfigurationError(SparseTrackingError, ValueError):
    pass


class StageError(SparseTrackingError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage {stage}: {cause}")


class RangeError(SparseTrackingError, IndexError):
    pass
