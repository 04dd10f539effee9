"""Exception types raised across the package."""


class SpecPruneError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(SpecPruneError):
    pass


class NonFinite(SpecPruneError):
    pass


class NonSymmetric(SpecPruneError):
    pass


class IndefiniteBeyondTolerance(SpecPruneError):
    pass


class Singular(SpecPruneError):
    pass


class IndexOutOfRange(SpecPruneError):
    pass


class DuplicateIndex(SpecPruneError):
    pass


class NonFiniteActivation(SpecPruneError):
    pass


class CorruptManifest(SpecPruneError):
    pass


class BadMagic(SpecPruneError):
    pass


class TruncatedFile(SpecPruneError):
    pass


class DivergedLoss(SpecPruneError):
    pass


class NegativeLambda(SpecPruneError):
    pass


class ZeroMatrix(SpecPruneError):
    pass


class ZeroRowNorm(SpecPruneError):
    pass


class AllZeroRows(SpecPruneError):
    pass


class ZeroOperatorNorm(SpecPruneError):
    pass


class UnsupportedLayerKind(SpecPruneError):
    pass
