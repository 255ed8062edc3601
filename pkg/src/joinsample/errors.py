"""Exception hierarchy.

Every error carries a ``category`` (a stable machine-readable name) and an
``exit_code`` used by the command-line front end:

    2  query/spec errors
    3  data errors
    4  statistical stalls (rejection or retry budgets exhausted)
    5  oracle size guard
"""


class JoinSampleError(Exception):
    exit_code = 1

    @property
    def category(self) -> str:
        return type(self).__name__


# -- spec errors --------------------------------------------------------------

class SpecError(JoinSampleError):
    exit_code = 2


class UnknownTable(SpecError):
    pass


class UnknownColumn(SpecError):
    pass


class DisconnectedGraph(SpecError):
    pass


class UnsupportedOperatorCombination(SpecError):
    pass


class MissingStatistics(SpecError):
    pass


# -- data errors --------------------------------------------------------------

class DataError(JoinSampleError):
    exit_code = 3


class IoError(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class NonFiniteWeight(DataError):
    pass


class NegativeWeight(DataError):
    pass


class NonNumericValue(DataError):
    pass


class OrderedComparisonOnNonNumeric(NonNumericValue):
    pass


class ZeroTotalWeight(DataError):
    pass


class EmptyPopulation(ZeroTotalWeight):
    pass


class KeyViolation(DataError):
    pass


class TotalMismatch(DataError):
    pass


class UnresolvedDraw(DataError):
    pass


class ReservoirExhausted(DataError):
    pass


class EmptyDistinctSet(DataError):
    pass


class ForeignTree(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class EmptySample(DataError):
    pass


class TempStorageError(DataError):
    pass


# -- statistical stalls -------------------------------------------------------

class StallError(JoinSampleError):
    exit_code = 4


class AcceptanceStall(StallError):
    def __init__(self, message, acceptance_rate=None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class RetryBudgetExceeded(StallError):
    pass


# -- oracle -------------------------------------------------------------------

class SizeGuardExceeded(JoinSampleError):
    exit_code = 5
