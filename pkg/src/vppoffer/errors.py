"""Exception types shared across the package."""


class VppError(Exception):
    """Base class for errors raised by this package."""


class InputError(VppError, ValueError):
    """Malformed or inconsistent input data / configuration."""


class InfeasibleError(VppError, RuntimeError):
    """A model whose feasible region is empty, detected before or during a solve."""
