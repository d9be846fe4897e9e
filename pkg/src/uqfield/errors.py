"""Exception types raised across the package.

Every error carries a short machine-readable ``category`` used by the CLI
when it reports failures on a single line.
"""


class UQFieldError(Exception):
    category = "Error"


class OutOfDomain(UQFieldError, ValueError):
    category = "OutOfDomain"


class SeedOutOfDomain(OutOfDomain):
    category = "SeedOutOfDomain"


class DimensionMismatch(UQFieldError, ValueError):
    category = "DimensionMismatch"


class DomainMismatch(UQFieldError, ValueError):
    category = "DomainMismatch"


class ShapeMismatch(UQFieldError, ValueError):
    category = "ShapeMismatch"


class NonFiniteActivation(UQFieldError, FloatingPointError):
    category = "NonFiniteActivation"


class NonFiniteUpdate(UQFieldError, FloatingPointError):
    category = "NonFiniteUpdate"


class NonFiniteLoss(UQFieldError, FloatingPointError):
    category = "NonFiniteLoss"

    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class MemberFailure(UQFieldError):
    category = "MemberFailure"

    def __init__(self, member, cause):
        super().__init__(f"ensemble member {member} failed: {cause}")
        self.member = member
        self.cause = cause


class InsufficientSamples(UQFieldError, ValueError):
    category = "InsufficientSamples"


class EmptyBundle(UQFieldError, ValueError):
    category = "EmptyBundle"


class NonSquare(UQFieldError, ValueError):
    category = "NonSquare"


class ZeroRange(UQFieldError, ValueError):
    category = "ZeroRange"


class EmptySet(UQFieldError, ValueError):
    category = "EmptySet"


class EmptyTruth(EmptySet):
    category = "EmptyTruth"


class SizeMismatch(UQFieldError, ValueError):
    category = "SizeMismatch"


class ParseError(UQFieldError, ValueError):
    category = "ParseError"


class BadMagic(UQFieldError, ValueError):
    category = "BadMagic"


class VersionUnsupported(UQFieldError, ValueError):
    category = "VersionUnsupported"


class CorruptPayload(UQFieldError, ValueError):
    category = "CorruptPayload"


class ConfigError(UQFieldError, ValueError):
    category = "ConfigError"
