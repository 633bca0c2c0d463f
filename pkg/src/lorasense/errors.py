"""Exception hierarchy shared by every module."""


class LoraSenseError(Exception):
    """Base class for all package errors."""


class ConfigError(LoraSenseError, ValueError):
    pass


class DomainError(LoraSenseError, ValueError):
    """An argument lies outside the domain of the operation."""


class InvalidMeasurementError(DomainError):
    pass


class FormatError(LoraSenseError, ValueError):
    """Input file structure (header, document layout) is not recognised."""


class RecordErrors(LoraSenseError, ValueError):
    """Row-level parse failures, accumulated over a whole input.

    ``errors`` holds ``(row_number, column, message)`` tuples; row numbers are
    1-based physical line numbers, so the CSV header is line 1.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        head = "; ".join(f"row {r}: {c}: {m}" for r, c, m in self.errors[:10])
        more = "" if len(self.errors) <= 10 else f" (+{len(self.errors) - 10} more)"
        super().__init__(f"{len(self.errors)} bad row(s): {head}{more}")

    @property
    def count(self):
        return len(self.errors)


class LabelConflictError(LoraSenseError, ValueError):
    pass


class LabelError(LoraSenseError, ValueError):
    pass


class SplitError(LoraSenseError, ValueError):
    pass


class DegenerateTrainingError(LoraSenseError, ValueError):
    pass


class MappingError(LoraSenseError, KeyError):
    pass
