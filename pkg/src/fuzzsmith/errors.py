"""Exception taxonomy.

Every error carries a stable ``code`` string so the CLI can map failures
to exit codes and tests can assert on failure categories without string
matching on messages.
"""

from __future__ import annotations


class FuzzsmithError(Exception):
    """Base class for all errors raised by this package."""

    code = "ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


# --- binary parsing -------------------------------------------------------

class NotElfError(FuzzsmithError):
    code = "NOT_ELF"


class UnsupportedClassError(FuzzsmithError):
    code = "UNSUPPORTED_CLASS"


class NoDynsymError(FuzzsmithError):
    code = "NO_DYNSYM"


class TruncatedElfError(FuzzsmithError):
    code = "TRUNCATED"


# --- disassembly / signature inference ------------------------------------

class AdapterUnavailableError(FuzzsmithError):
    code = "ADAPTER_UNAVAILABLE"


class DecodeFailureError(FuzzsmithError):
    code = "DECODE_FAILURE"


class ProviderFailureError(FuzzsmithError):
    code = "PROVIDER_FAILURE"


# --- model backends --------------------------------------------------------

class BackendUnreachableError(FuzzsmithError):
    code = "BACKEND_UNREACHABLE"


class RateLimitedError(FuzzsmithError):
    """One throttled response from a backend; retried internally by send()."""

    code = "RATE_LIMITED"

    def __init__(self, message: str = "", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class RateLimitedExhaustedError(FuzzsmithError):
    code = "RATE_LIMITED_EXHAUSTED"


class MalformedResponseError(FuzzsmithError):
    code = "MALFORMED_RESPONSE"


class NoRuleMatchedError(FuzzsmithError):
    code = "NO_RULE_MATCHED"


class TranscriptExhaustedError(FuzzsmithError):
    code = "TRANSCRIPT_EXHAUSTED"


class TranscriptMissingError(FuzzsmithError):
    code = "TRANSCRIPT_MISSING"


class TranscriptInvariantError(FuzzsmithError):
    code = "TRANSCRIPT_INVARIANT"


# --- prompts ---------------------------------------------------------------

class MissingPlaceholderError(FuzzsmithError):
    code = "MISSING_PLACEHOLDER"


# --- driver forging --------------------------------------------------------

class NoCodeFoundError(FuzzsmithError):
    code = "NO_CODE_FOUND"


class CompilerNotFoundError(FuzzsmithError):
    code = "COMPILER_NOT_FOUND"


# --- ledger ----------------------------------------------------------------

class UnknownFunctionError(FuzzsmithError):
    code = "UNKNOWN_FUNCTION"


class IoFailureError(FuzzsmithError):
    code = "IO_FAILURE"


class MalformedLedgerError(FuzzsmithError):
    code = "MALFORMED_LEDGER"


# --- orchestration ---------------------------------------------------------

class PhaseViolationError(FuzzsmithError):
    code = "PHASE_VIOLATION"


# --- configuration ---------------------------------------------------------

class FatalConfigError(FuzzsmithError):
    code = "FATAL_CONFIG"
