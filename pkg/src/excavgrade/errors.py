"""Exception types shared across the package."""


class ExcavGradeError(Exception):
    """Base class for package errors."""


class DataError(ExcavGradeError, ValueError):
    """Invalid or non-finite input data."""


class LoadError(ExcavGradeError):
    """Input file failed to parse or validate."""

    def __init__(self, message: str, path=None, line: int | None = None) -> None:
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(ExcavGradeError, ValueError):
    """Invalid pipeline configuration."""


class EstimationError(ExcavGradeError):
    """An entity (bucket, truck, dump) could not be estimated."""

    def __init__(self, message: str, entity_id=None) -> None:
        super().__init__(message if entity_id is None else f"{entity_id}: {message}")
        self.entity_id = entity_id
        self.reason = message


class BucketOutsideModel(EstimationError):
    """The bucket sphere does not intersect any modelled block."""


class NoSampledLocations(EstimationError):
    """The sampling grid produced no locations around a dig position."""


class WindowError(EstimationError):
    """A dump time window contains no trucks."""


class NumericalError(ExcavGradeError, ArithmeticError):
    """Covariance matrix not positive semi-definite after jitter."""
