"""Exception hierarchy.

Errors fall into three families that the command line maps to distinct exit
codes: configuration problems (bad flags or hyperparameters), data problems
(malformed or incomplete panels) and numerical problems (solver failures,
undefined estimators).
"""

from __future__ import annotations


class PanelcfError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(PanelcfError):
    """Invalid user-supplied configuration."""

    exit_code = 2


class DataError(PanelcfError):
    """Malformed, incomplete or inconsistent input data."""

    exit_code = 3


class NumericalError(PanelcfError):
    """A computation could not be carried out reliably."""

    exit_code = 4


# data errors


class MissingCell(DataError):
    def __init__(self, unit: str, time: str):
        super().__init__(f"missing cell for unit={unit!r}, time={time!r}")
        self.unit = unit
        self.time = time


class DuplicateCell(DataError):
    def __init__(self, unit: str, time: str):
        super().__init__(f"duplicate cell for unit={unit!r}, time={time!r}")
        self.unit = unit
        self.time = time


class UnknownTreatedUnit(DataError):
    def __init__(self, label: str):
        super().__init__(f"treated unit {label!r} not found in panel")
        self.label = label


class T0OutOfRange(DataError):
    def __init__(self, t0: int, n_times: int):
        super().__init__(f"t0={t0} must satisfy 1 <= t0 < T={n_times}")
        self.t0 = t0
        self.n_times = n_times


class PeriodBeforeTreatment(DataError):
    def __init__(self, period: int, t0: int):
        super().__init__(f"period index {period} is not a post-treatment period (t0={t0})")
        self.period = period
        self.t0 = t0


class NonFiniteInput(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# configuration errors


class KOutOfRange(ConfigError):
    def __init__(self, k: int, rank: int):
        super().__init__(f"k={k} must satisfy 1 <= k <= rank={rank}")
        self.k = k
        self.rank = rank


class NonPositiveLambda(ConfigError):
    pass


class UnsupportedMethod(ConfigError):
    pass


# numerical errors


class NotConverged(NumericalError):
    def __init__(self, iterations: int, what: str = "solver"):
        super().__init__(f"{what} did not converge after {iterations} iterations")
        self.iterations = iterations


class DegenerateSide(NumericalError):
    def __init__(self, side: str):
        super().__init__(f"{side} residual degrees of freedom are zero")
        self.side = side


class HrkUndefined(NumericalError):
    def __init__(self, side: str, cond: float):
        super().__init__(
            f"HRK system for the {side} side is numerically singular (condition {cond:.3g})"
        )
        self.side = side
        self.cond = cond


class NegativeVariance(NumericalError):
    def __init__(self, v: float):
        super().__init__(f"variance must be nonnegative, got {v!r}")
        self.v = v


class EmptyAverage(NumericalError):
    pass


class DegenerateDgp(NumericalError):
    pass
