"""Exception types shared across the package.

Each class carries the CLI exit code it maps to: 2 for configuration or
feasibility failures, 3 for numerical failures, 4 for I/O.
"""


class OtaflError(Exception):
    """Base class for package-specific failures."""

    exit_code = 3


class ConfigError(OtaflError):
    """A configuration value violates its contract; message names the field."""

    exit_code = 2


class InfeasibleError(OtaflError):
    """The feasible iteration set is empty."""

    exit_code = 2

    def __init__(self, tau_min=None, tau_max=None, msg=None):
        self.tau_min = tau_min
        self.tau_max = tau_max
        if msg is None:
            msg = (
                f"empty feasible iteration set: tau_gamma_min={tau_min} > "
                f"tau_eps_max={tau_max}"
            )
        super().__init__(msg)


class NonPositiveRadicandError(OtaflError):
    """The closed-form power-balance formula has a nonpositive radicand."""

    exit_code = 3


class MaxItersExceededError(OtaflError):
    """Bisection hit its iteration cap; carries the last bracket."""

    exit_code = 3

    def __init__(self, lo, hi, iters):
        self.bracket = (lo, hi)
        self.iters = iters
        super().__init__(f"bisection exceeded {iters} iterations, bracket=({lo!r}, {hi!r})")


class OracleConvergenceError(OtaflError):
    """Numerical quadrature failed to reach the requested tolerance."""

    exit_code = 3


class EmptyRoundError(OtaflError):
    """No reliable client this round under realized-divisor aggregation."""

    exit_code = 3


class DegenerateGainError(OtaflError):
    """A gain draw is degenerate for the requested operation (e.g. zero minimum)."""

    exit_code = 2
