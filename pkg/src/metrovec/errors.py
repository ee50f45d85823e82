"""Exception types shared across the package.

Every error raised by library code derives from PipelineError; the CLI maps
``exit_code`` onto the process status (2 usage, 3 data validation,
4 stage order / integrity).
"""


class PipelineError(Exception):
    exit_code = 1


class UsageError(PipelineError):
    exit_code = 2


class ValidationError(PipelineError):
    exit_code = 3


class FormatError(ValidationError):
    """Malformed input file (bad magic, wrong column count, unparsable line)."""


class NotFoundError(ValidationError):
    """An entity id was looked up but is not present."""


class StageOrderError(PipelineError):
    exit_code = 4


class IntegrityError(StageOrderError):
    """A checkpoint or ingested file no longer matches its manifest hash."""
