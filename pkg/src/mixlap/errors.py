"""Exception hierarchy. Every failure raised by the package derives from MixlapError."""


class MixlapError(Exception):
    pass


class EmptyInterior(MixlapError):
    pass


class BadSpacing(MixlapError):
    pass


class NotInterior(MixlapError):
    pass


class GridMismatch(MixlapError):
    pass


class UnsupportedOrder(MixlapError):
    pass


class SubcriticalDimension(MixlapError):
    pass


class SingularSystem(MixlapError):
    pass


class NotContracting(MixlapError):
    pass


class MaxIterExceeded(MixlapError):
    pass


class NoContractionFound(MixlapError):
    pass


class Diverged(MixlapError):
    pass


class Overflow(MixlapError):
    pass


class AnnulusFailure(MixlapError):
    pass


class NoSupersolution(MixlapError):
    pass


class TransformFailed(MixlapError):
    pass


class MaxPrincipleViolated(MixlapError):
    pass


class TooFewNodes(MixlapError):
    pass


class TooFewScales(MixlapError):
    pass


class ConfigError(MixlapError):
    pass
