"""Exception hierarchy.

Every error raised by the package derives from :class:`FundSvmError`. The three
intermediate classes map onto CLI exit codes (config 2, data 3, compute 4).
"""


class FundSvmError(Exception):
    exit_code = 1


class ConfigInvalid(FundSvmError):
    exit_code = 2


class DataError(FundSvmError):
    exit_code = 3


class ComputeError(FundSvmError):
    exit_code = 4


# ingest
class MalformedRow(DataError):
    pass


class DuplicateCell(DataError):
    pass


class EmptyFile(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class UnsortableDates(DataError):
    pass


class MetaMissing(DataError):
    pass


class EmptyUniverse(DataError):
    pass


# preprocess
class AllFeaturesDropped(DataError):
    pass


class AllMissingSlice(DataError):
    pass


class BaseZero(DataError):
    pass


class EmptySignal(ComputeError):
    pass


class NonFiniteInput(ComputeError):
    pass


# dataset
class InsufficientPriceHistory(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class InvalidRatio(ConfigInvalid):
    pass


class TooFewRows(DataError):
    pass


# svm
class DimensionMismatch(ComputeError):
    pass


class SingleClassInput(ComputeError):
    pass


class SingularSystem(ComputeError):
    pass


class NotConverged(ComputeError):
    pass


class WrongSolver(ComputeError):
    pass


class EmptyGrid(ConfigInvalid):
    pass


# evaluate
class LengthMismatch(ComputeError):
    pass


class EmptyInput(ComputeError):
    pass


class EmptyPortfolio(ComputeError):
    pass


# synth
class InvalidSpec(ConfigInvalid):
    pass


class SpecMismatch(ConfigInvalid):
    pass
