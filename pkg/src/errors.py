"""
errors.py

Exception hierarchy for surrbound. Every error is a ValueError so callers that
only care about "bad input" can keep catching ValueError. The CLI maps each
class to a process exit code through the `exit_code` attribute.
"""

USAGE_EXIT = 2
DATA_EXIT = 3
INFEASIBLE_EXIT = 4


class SurrboundError(ValueError):
    exit_code = DATA_EXIT


class UsageError(SurrboundError):
    exit_code = USAGE_EXIT


# law-core
class NotAProbability(SurrboundError):
    pass


class NotNormalized(SurrboundError):
    pass


# closed-bounds / lp-engine
class InfeasibleInputs(SurrboundError):
    exit_code = INFEASIBLE_EXIT


class WrongScale(UsageError):
    pass


class BadRange(UsageError):
    pass


class NumericalBreakdown(SurrboundError):
    pass


class DegenerateDenominator(SurrboundError):
    pass


class ZeroControlRisk(SurrboundError):
    pass


# symbolic-derive
class TooManyCombinations(SurrboundError):
    pass


class EmptyPolyhedron(SurrboundError):
    pass


# dgp-lab
class PremiseViolated(SurrboundError):
    pass


# ingestion / bootstrap
class MalformedRow(SurrboundError):
    def __init__(self, path: str, line_no: int, row: str):
        super().__init__(f"{path}:{line_no}: malformed row {row!r} (expected binary 0/1 values)")
        self.path = path
        self.line_no = line_no
        self.row = row


class EmptyFile(SurrboundError):
    pass


class AllReplicatesInfeasible(SurrboundError):
    exit_code = INFEASIBLE_EXIT


class DegenerateArm(SurrboundError):
    pass
