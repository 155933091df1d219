"""Exception hierarchy shared by all dgmeval modules."""


class DgmError(Exception):
    """Base class for all dgmeval errors."""


# ---------------------------------------------------------------------------
# embedding file / set errors


class BadMagic(DgmError):
    def __init__(self, path, offset=0):
        super().__init__(f"{path}: bad magic at byte offset {offset}")
        self.offset = offset


class VersionUnsupported(DgmError):
    def __init__(self, path, what, offset=4):
        super().__init__(f"{path}: unsupported {what} at byte offset {offset}")
        self.offset = offset


class TruncatedPayload(DgmError):
    def __init__(self, path, expected, actual, offset):
        super().__init__(
            f"{path}: payload size mismatch at byte offset {offset} "
            f"(expected {expected} bytes total, found {actual})"
        )
        self.offset = offset


class NonFiniteValue(DgmError):
    def __init__(self, where, offset):
        super().__init__(f"{where}: non-finite value at byte offset {offset}")
        self.offset = offset


class IoFailure(DgmError):
    pass


class CountExceedsN(DgmError):
    pass


class StratifiedWithoutLabels(DgmError):
    pass


class NonDivisibleCount(DgmError):
    pass


class MissingLabels(DgmError):
    pass


# ---------------------------------------------------------------------------
# numerical-kernel errors


class TooFewSamples(DgmError):
    pass


class DimensionMismatch(DgmError):
    pass


class SignificantNegativeEigenvalue(DgmError):
    pass


class EigenFailure(DgmError):
    pass


class TooManyComponents(DgmError):
    pass


# ---------------------------------------------------------------------------
# metric errors


class KTooLarge(DgmError):
    pass


class ZeroNormRow(DgmError):
    pass


class SupportMismatch(DgmError):
    pass


class InvalidDistribution(DgmError):
    pass


class TooFewTrainRows(DgmError):
    pass


class DegenerateNeighborhood(DgmError):
    pass


class NoAdmissibleCells(DgmError):
    pass


class EmptyInput(DgmError):
    pass


# ---------------------------------------------------------------------------
# correlation / report errors


class ConstantSeries(DgmError):
    pass


class LengthMismatch(DgmError):
    pass


class TooFewPoints(DgmError):
    pass


class InsufficientOverlap(DgmError):
    pass


class MissingRole(DgmError):
    def __init__(self, role, needed_by):
        super().__init__(f"metric '{needed_by}' requires the '{role}' input")
        self.role = role
        self.needed_by = needed_by
