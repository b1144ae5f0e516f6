"""Exception hierarchy shared across pipeline stages."""


class KnowpipeError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(KnowpipeError):
    """Invalid run configuration (checked before any network call)."""


class DatasetError(KnowpipeError):
    """Malformed dataset or stage file; carries line context when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GatewayError(KnowpipeError):
    """Chat backend failure: network, rate limit, or malformed response."""


class ElicitationError(KnowpipeError):
    """No usable knowledge could be elicited for a question."""


class ScorerError(KnowpipeError):
    """Knowledge scorer failure: unreachable, bad length, or bad range."""


class PrepError(KnowpipeError):
    """Training-set preparation failure (empty after filter, bad split)."""


class ReasoningError(KnowpipeError):
    """Strategy runner failure (e.g. no scored knowledge supplied)."""


class EvalError(KnowpipeError):
    """Evaluation failure: duplicate/mismatched question sets, empty runs."""
