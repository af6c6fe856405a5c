"""Exception hierarchy shared across the package."""


class PipecleanError(Exception):
    """Base class for all library errors."""


class InputError(PipecleanError):
    """Bad user input: unreadable files, invalid parameters, missing artifacts."""


class SchemaMismatchError(PipecleanError):
    """Two tables that must share a column schema do not."""


class DegenerateDataError(PipecleanError):
    """Data cannot support the requested computation (e.g. single-class training set)."""


class RewardError(PipecleanError):
    """A reward computation failed; never silently mapped to 0."""


class TrainingDivergence(PipecleanError):
    """Policy optimization produced non-finite outputs."""
