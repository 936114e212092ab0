"""Exception hierarchy; the CLI maps these onto process exit codes."""


class CabinFrontError(Exception):
    exit_code = 2


class DataError(CabinFrontError, ValueError):
    """Input data violates a precondition (bad audio, malformed RTTM, ...)."""

    exit_code = 2


class ConfigError(CabinFrontError, ValueError):
    """Invalid configuration or usage."""

    exit_code = 1


class HookError(CabinFrontError, RuntimeError):
    """An external hook command failed or timed out."""

    exit_code = 3
