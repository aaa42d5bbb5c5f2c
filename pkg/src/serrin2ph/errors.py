"""Exception hierarchy shared by the solver modules and the CLI."""


class SerrinError(Exception):
    """Base class for all domain errors."""


class GeometryError(SerrinError):
    pass


class StarShapeViolation(GeometryError):
    pass


class InclusionOverlap(GeometryError):
    pass


class CutoffOrdering(SerrinError, ValueError):
    pass


class EllipticityLoss(SerrinError):
    pass


class ResolutionTooLow(SerrinError):
    pass


class NotCritical(SerrinError):
    pass


class DegenerateBase(SerrinError):
    pass


class NoConvergence(SerrinError):
    pass


class StepTooLarge(SerrinError):
    pass


class SingularSystem(SerrinError):
    pass


class OutsideTrustRegion(SerrinError, ValueError):
    pass


class ConfigError(SerrinError, ValueError):
    pass
