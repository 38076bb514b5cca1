"""Exception types shared across the package.

Validation problems (bad arguments, malformed configs) raise ValueError;
anything that goes wrong *during* a numerical computation raises
NumericalError so callers (and the CLI exit-code contract) can tell the
two apart.
"""


class NumericalError(RuntimeError):
    """A computation failed numerically (overflow, instability, mass loss)."""


class DegenerateKernelError(NumericalError):
    """A transition kernel collapsed to a point (zero volatility).

    Carries the deterministic shift so callers can fall back to analytic
    handling of the noise-free step.
    """

    def __init__(self, message: str, shift: float):
        super().__init__(message)
        self.shift = shift
