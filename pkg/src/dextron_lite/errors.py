"""Exception types shared across the package."""


class DextronError(Exception):
    """Base class for all package errors."""


class DegenerateTrajectory(DextronError, ValueError):
    pass


class NonMonotoneTime(DextronError, ValueError):
    pass


class NonPositiveDuration(DextronError, ValueError):
    pass


class ParseError(DextronError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class UnknownTrajectory(DextronError, KeyError):
    def __str__(self):
        return f"unknown trajectory id {self.args[0]!r}"


class SteppedAfterDone(DextronError, RuntimeError):
    pass


class ReplayMismatch(DextronError):
    pass


class SearchError(DextronError):
    """Raised after a search when some samples failed; carries their indices."""

    def __init__(self, failures):
        self.failures = dict(failures)
        idx = sorted(self.failures)
        shown = ", ".join(str(i) for i in idx[:10])
        more = "" if len(idx) <= 10 else f" (+{len(idx) - 10} more)"
        first = self.failures[idx[0]] if idx else ""
        super().__init__(f"{len(idx)} samples failed: [{shown}{more}]; first error: {first}")


class DimensionMismatch(DextronError, ValueError):
    pass


class EmptyBuffer(DextronError, ValueError):
    pass


class EmptyDataset(DextronError, ValueError):
    pass


class SingleClassDataset(DextronError, ValueError):
    pass


class MissingCheckpoint(DextronError, FileNotFoundError):
    pass


class ConfigError(DextronError, ValueError):
    pass
