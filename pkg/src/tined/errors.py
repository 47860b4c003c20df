"""Exception hierarchy shared across the package."""


class TinedError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TinedError, ValueError):
    pass


class RankError(TinedError, ValueError):
    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class ConvergenceError(TinedError, RuntimeError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class DomainError(TinedError, ValueError):
    pass


class DataError(TinedError, ValueError):
    pass


class IngestionError(DataError):
    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class TrainingError(TinedError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
