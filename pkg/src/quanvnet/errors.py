"""Error taxonomy shared across modules; the CLI maps these to exit codes."""


class ConfigError(ValueError):
    """Invalid structural or run configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Missing, malformed, or inconsistent dataset files (CLI exit code 3)."""


class DivergenceError(RuntimeError):
    """Non-finite loss during training (CLI exit code 4)."""
