"""Exception types shared across the package."""


class InvariantViolation(RuntimeError):
    """A numerical invariant (Hermiticity, spectrum bounds, purity, ...) broke."""


class ResourceGuardError(RuntimeError):
    """A requested run exceeds the configured memory/time guard."""
