"""Exception hierarchy shared by every module in the package."""


class Tool2AgentError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(Tool2AgentError):
    pass


class DataError(Tool2AgentError):
    """Input data (catalog, benchmark, index files) is unusable."""


class ParseError(DataError):
    def __init__(self, message, locus=None):
        self.locus = locus
        super().__init__(f"{message} (at {locus})" if locus is not None else message)


class ValidationError(DataError):
    def __init__(self, message, record_id=None):
        self.record_id = record_id
        super().__init__(f"{record_id!r}: {message}" if record_id is not None else message)


class DanglingReference(ValidationError):
    pass


class UnknownEntity(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class EmptyRelevantSet(DataError):
    pass


class IndexFormatError(DataError):
    pass


class ScopeMismatch(Tool2AgentError):
    pass


class ProviderError(Tool2AgentError):
    """Embedding provider failed after all retries."""

    def __init__(self, message, status=None, retries=0):
        self.status = status
        self.retries = retries
        super().__init__(f"{message} (status={status}, retries={retries})")


class CredentialMissing(ProviderError):
    def __init__(self, env_var):
        self.env_var = env_var
        Tool2AgentError.__init__(self, f"credential environment variable {env_var!r} is not set")
        self.status = None
        self.retries = 0


class DimensionMismatch(ProviderError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        Tool2AgentError.__init__(self, f"expected dimension {expected}, got {got}")
        self.status = None
        self.retries = 0
