"""Exception hierarchy shared by every stage of the pipeline."""


class ReadsortError(Exception):
    """Base class for all errors raised by readsort."""

    #: process exit code used by the command line front end
    exit_code = 3


class IoFailure(ReadsortError):
    pass


class MalformedRecord(ReadsortError):
    def __init__(self, index, reason):
        self.index = index
        self.reason = reason
        super().__init__(f"malformed FASTQ record {index}: {reason}")


class MalformedFasta(ReadsortError):
    pass


class EmptyDb(ReadsortError):
    pass


class EmptyReads(ReadsortError):
    pass


class EmptyReference(ReadsortError):
    pass


class EmptyRead(ReadsortError):
    pass


class FrozenModel(ReadsortError):
    pass


class InvalidPlan(ReadsortError):
    pass


class CorruptSidecar(ReadsortError):
    pass


class CorruptContainer(ReadsortError):
    pass


class DesyncDetected(CorruptContainer):
    pass


class DomainError(ReadsortError, ValueError):
    pass


class RefTooShort(ReadsortError):
    pass


class ToolMissing(ReadsortError):
    exit_code = 4


class ToolFailed(ReadsortError):
    exit_code = 4

    def __init__(self, command, returncode, stderr=b""):
        self.command = command
        self.returncode = returncode
        self.stderr = stderr
        detail = stderr.decode(errors="replace").strip()
        msg = f"command {command!r} exited with status {returncode}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class StageError(ReadsortError):
    """Wraps an error with the name of the pipeline stage that raised it."""

    def __init__(self, stage, error):
        self.stage = stage
        self.error = error
        self.exit_code = getattr(error, "exit_code", 3)
        super().__init__(f"{stage}: {type(error).__name__}: {error}")
