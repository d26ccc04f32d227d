"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when inputs are structurally invalid: dimension mismatches,
    malformed config files, non-finite matrix entries, or unstable systems
    passed to operations that require stability."""


class EvaluationError(RuntimeError):
    """Raised when a numerical evaluation goes wrong at runtime: NaN or
    infinity produced by a dynamics map, a controller, or a gradient."""
