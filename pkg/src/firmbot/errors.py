"""Exception types shared across the engine."""


class FirmbotError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FirmbotError):
    """A definition file is malformed (bad JSON/CSV, missing keys, bad enums)."""


class ValidationError(FirmbotError):
    """A definition file parsed but violates a model invariant."""


class BuildError(FirmbotError):
    """A classifier model could not be built (e.g. no training utterances)."""


class ConfigError(FirmbotError):
    """Runtime configuration is inconsistent (e.g. missing response row)."""


class MissingResponse(ConfigError):
    """No response row exists for an (intent, service) lookup."""

    def __init__(self, intent: str, service: str | None):
        self.intent = intent
        self.service = service
        super().__init__(f"no response row for intent={intent!r} service={service or '*'!r}")


class EngineError(FirmbotError):
    """Internal contract violation inside the dialogue engine."""


class SinkUnavailable(FirmbotError):
    """A fulfillment sink could not accept a write; callers may retry."""


class FormatError(FirmbotError):
    """An enquiry input file does not follow the expected format."""


class UnknownLabel(FirmbotError):
    """A curation label names an intent that exists in no bot."""


class ScriptError(FirmbotError):
    """A conversation test script is malformed."""
