"""Exception types shared across the package."""


class SimulationError(RuntimeError):
    """A run became numerically invalid (price overflow or underflow)."""


class InvariantError(RuntimeError):
    """Internal consistency violation; indicates a bug, not bad input."""
