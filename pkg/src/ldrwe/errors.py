"""Exception hierarchy shared by the numerical modules and the CLI."""


class LdrweError(Exception):
    """Base class for all package errors."""


class ConfigError(LdrweError, ValueError):
    """Invalid user input; names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NotInRelativeInterior(LdrweError, ValueError):
    """Velocity lies outside ri(conv(R))."""

    def __init__(self, xi, message: str = "velocity is not in the relative interior of the step hull"):
        self.xi = xi
        super().__init__(f"{message} (xi={list(map(float, xi))})")


class NonConvergence(LdrweError, ArithmeticError):
    pass


class ZeroProbabilityStep(LdrweError, ValueError):
    pass


class CapExceeded(LdrweError):
    """Tuple enumeration would exceed the enumeration cap."""


class BudgetExceeded(LdrweError):
    """Dynamic programming table would exceed the cell budget."""


class HorizonExceeded(LdrweError, IndexError):
    pass


class EmptyWindow(LdrweError):
    """No reachable lattice endpoint falls inside the target window."""


class NonpositiveU(LdrweError, ValueError):
    pass
