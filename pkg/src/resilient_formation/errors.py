"""Exception hierarchy.

Each family maps to one CLI exit code: configuration problems exit 2,
solvability failures (regulator equations, Riccati equations) exit 3 and
certification failures exit 4.
"""


class RFSError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(RFSError):
    exit_code = 2


class DimensionMismatch(RFSError, ValueError):
    exit_code = 2


class SolvabilityError(RFSError):
    exit_code = 3


class NoSolution(SolvabilityError):
    """The stacked regulator system is inconsistent."""


class DetectabilityFailure(SolvabilityError):
    """The estimator Riccati equation has no stabilizing solution."""


class StabilizabilityFailure(SolvabilityError):
    pass


class CertificationError(RFSError):
    exit_code = 4


class SingularExchangeMatrix(CertificationError):
    """H = L + B is numerically singular (no leader-rooted spanning tree)."""


class IndefiniteCertificate(CertificationError):
    pass


class EmptyConnectedSet(CertificationError):
    pass


class WeightError(CertificationError, ValueError):
    pass


class EmptyGainInterval(CertificationError):
    """The admissible coupling interval (1/lambda_m, eps/sigma_m) is empty."""


class ObservabilityFailure(CertificationError):
    pass


class LyapunovFailure(CertificationError):
    pass


class ScheduleError(RFSError):
    exit_code = 4


class OutOfHorizon(ScheduleError, ValueError):
    pass


class DegenerateSchedule(ScheduleError):
    pass


class InfeasibleRequest(ScheduleError):
    pass


class SimulationError(RFSError):
    exit_code = 5


class EventStraddle(SimulationError):
    pass


class NonFinite(SimulationError):
    pass


class DegenerateSeries(RFSError, ValueError):
    pass
