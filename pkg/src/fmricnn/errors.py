"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
onto its documented codes without a lookup table.
"""


class FmriCnnError(Exception):
    exit_code = 3


class UsageError(FmriCnnError):
    exit_code = 2


class DataError(FmriCnnError):
    """Malformed input file or inconsistent data."""

    exit_code = 3


class NumericError(FmriCnnError):
    """Divergence, non-finite values or a failed gradient check."""

    exit_code = 4


# nifti
class NiftiError(DataError):
    pass


class TooShort(NiftiError):
    pass


class BadMagic(DataError):
    pass


class BadHeader(NiftiError):
    pass


class UnsupportedDatatype(NiftiError):
    pass


class BadDims(NiftiError):
    pass


class TruncatedData(NiftiError):
    pass


class NonFiniteVoxel(NiftiError):
    pass


# dataset
class DropTooLarge(DataError):
    pass


class EmptyVolume(DataError):
    pass


class BadFractions(UsageError):
    pass


class EmptyIndexSet(DataError):
    pass


class CountMismatch(DataError):
    pass


# nn
class ShapeMismatch(DataError):
    pass


class IndivisibleExtent(ShapeMismatch):
    pass


class BadLabel(DataError):
    pass


class NonFiniteLoss(NumericError):
    pass


class GradientCheckFailed(NumericError):
    pass


# trainer / crossval / inspect
class EpochOutOfRange(UsageError):
    pass


class EmptySplit(DataError):
    pass


class TooFewRecords(DataError):
    pass


class EmptyResults(DataError):
    pass


class NoSuchLayer(UsageError):
    pass


class NotAConvLayer(UsageError):
    pass
