"""Error types shared across the lifter toolkit."""


class LifterError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(LifterError):
    pass


class ToolMissing(LifterError):
    """A compiler binary or target triple is not available on this host."""


class CompileError(LifterError):
    """A compiler invocation failed.

    Args:
        message (str): Short description
        returncode (int): Compiler exit code (-1 for timeouts)
        stderr (str): Compiler diagnostics, kept verbatim for error analysis
    """

    def __init__(self, message, returncode=1, stderr=''):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class MissingKey(LifterError):
    pass


class EmptySelection(LifterError):
    pass


class CorpusTooSmall(LifterError, UserWarning):
    """Emitted as a warning: the corpus cannot fill the requested vocabulary."""


class VocabularyOvershoot(LifterError, UserWarning):
    """Emitted as a warning: the trained vocabulary is larger than requested."""


class InvalidId(LifterError):
    pass


class UnknownEncoder(LifterError):
    pass


class DuplicateEncoder(LifterError):
    pass


class SequenceTooLong(LifterError):
    pass


class EmptyDataset(LifterError):
    pass


class UnsupportedSignature(LifterError):
    pass


class SandboxUnavailable(LifterError):
    pass


class EmptyInput(LifterError):
    pass


class DegenerateInput(LifterError):
    pass


class DependencyError(LifterError):
    """A stage input is missing and the stage that produces it was not requested."""

    def __init__(self, stage, producer, path):
        super().__init__(f"Stage '{stage}' needs {path}; run '{producer}' first")
        self.stage = stage
        self.producer = producer
        self.path = path


class StageFailed(LifterError):
    """A pipeline stage raised; ``log_path`` points at the stage log."""

    def __init__(self, stage, log_path, cause=None):
        super().__init__(f"Stage '{stage}' failed (see {log_path}): {cause}")
        self.stage = stage
        self.log_path = log_path
        self.cause = cause


class InvalidExample(LifterError):
    """An I/O example does not fit the function it belongs to."""
