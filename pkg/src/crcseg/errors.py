"""Exception hierarchy.

Every failure raised by the library derives from :class:`CrcError`, so callers
(and the CLI's exit-code mapping) can catch one base class. The subclasses are
grouped by the kind of failure they describe.
"""


class CrcError(Exception):
    """Base class for all library errors."""


# -- validation ---------------------------------------------------------------


class ValidationError(CrcError, ValueError):
    """Input data violates a type invariant."""


class ShapeMismatch(ValidationError):
    pass


class ValueOutOfRange(ValidationError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonBinaryMask(ValidationError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class LambdaOutOfRange(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class InvalidGrid(ValidationError):
    pass


class EmptyCalibrationSet(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


# -- configuration ------------------------------------------------------------


class ConfigInvalid(CrcError, ValueError):
    """A configuration object (risk spec, synth config, split spec) is invalid."""


# -- calibration outcome ------------------------------------------------------


class NotFeasible(CrcError):
    """An operation requiring a certified threshold got an infeasible result."""


class AlphaInfeasible(NotFeasible):
    """No grid threshold satisfies the corrected risk condition."""


# -- files --------------------------------------------------------------------


class IoFailure(CrcError, OSError):
    pass


class BadMagic(IoFailure):
    pass


class TruncatedFile(IoFailure):
    pass


class MissingFile(IoFailure):
    pass


class ManifestParse(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class BadPgm(IoFailure):
    pass
