"""
errors.py - Exception types shared across the analyzer.
"""


class ReentryScopeError(Exception):
    """Base class for every error the analyzer raises on purpose."""

    kind = "error"


class InputError(ReentryScopeError):
    """Unreadable input file, malformed hex, bad address or invalid run configuration."""

    kind = "input-error"


class ChainFetchError(ReentryScopeError):
    """Transport or JSON-RPC failure while reading chain state. Distinct from empty code."""

    kind = "fetch-error"
    retryable = True


class HookRegistryError(ReentryScopeError):
    """Malformed hook registry file."""

    kind = "hook-registry-error"
