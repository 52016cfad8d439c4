"""Exception types shared by the simulator, the ranking engine and the CLI."""


class PtxError(Exception):
    """Base class for every error raised by this project."""


class DataValidationError(PtxError, ValueError):
    """An input file does not conform to its schema."""

    def __init__(self, message, path=None, row=None, column=None):
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path is not None:
            where.append(f"file {path}")
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConfigError(PtxError, ValueError):
    """Invalid site, experiment, study or ranking settings."""


class HourOutOfRange(PtxError, IndexError):
    """Hour index outside the simulated year."""


class StudyStepError(PtxError, RuntimeError):
    """Failure inside the study workflow, tagged with where it happened."""

    def __init__(self, step, cause, experiment_id=None):
        self.step = step
        self.experiment_id = experiment_id
        self.cause = cause
        label = f"step '{step}'"
        if experiment_id is not None:
            label += f", experiment {experiment_id}"
        super().__init__(f"{label}: {cause}")
