"""Error hierarchy shared across the pipeline.

Every error carries a stable machine-readable ``code`` so the CLI can emit
``error[<code>]: message`` on the diagnostic stream.
"""


class TestsimError(Exception):
    code = "internal"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ParseError(TestsimError):
    """A file did not parse under its declared format."""

    code = "parse"


class ValidationError(TestsimError):
    """Parsed input violates an invariant (duplicate ids, bad ranges, ...)."""

    code = "validation"


class ConfigError(TestsimError):
    """A configuration value is missing, malformed, or out of range."""

    code = "config"


class BinaryFormatError(TestsimError):
    """A binary artifact is corrupt; message includes the byte offset."""

    code = "format"


class WordLookupError(TestsimError):
    """A token has no vector in the word embedding table."""

    code = "lookup"

    def __init__(self, token: str):
        super().__init__(f"no vector for token {token!r}")
        self.token = token


class ItemLookupError(TestsimError):
    """Item ids were requested that an artifact does not cover."""

    code = "lookup"

    def __init__(self, message: str, missing: list[str]):
        super().__init__(message)
        self.missing = missing


class WorkspaceLockError(TestsimError):
    """Another command holds the workspace lock."""

    code = "locked"
