"""Exception types shared across the package."""


class CostGuardError(ValueError):
    """Raised when a requested computation exceeds a documented cost bound."""


class NoReducingTuple(RuntimeError):
    """No column of a polynomial family lowers its type under van der Corput."""


class WindowExhausted(ValueError):
    """The pattern shifts leave no valid sub-window inside the set's window."""


class InputError(ValueError):
    """Malformed input file or argument; the message names the offending line."""
