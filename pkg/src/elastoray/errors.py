"""Exception types shared across the library."""


class ElastorayError(Exception):
    """Base class for all library-specific errors."""


class OnInterfaceWithoutHint(ElastorayError):
    """Point lies within tolerance of an interface and no side hint was given."""


class OutsideAllRegions(ElastorayError):
    """Region resolution failed for the given point."""


class NonPhysical(ElastorayError):
    """Strong convexity (mu > 0, 3*lambda + 2*mu > 0) violated at a point."""


class NoFoliation(ElastorayError):
    """Medium has no foliation field."""


class CharacteristicViolation(ElastorayError):
    """Characteristic-condition drift exceeded the failure threshold."""


class StepFailure(ElastorayError):
    """Adaptive integrator step size underflowed or the solver failed."""


class GlancingRay(ElastorayError):
    """Interface hit below the transversality tolerance."""


class PolicyExhausted(ElastorayError):
    """Requested branch at an interface event is evanescent or unavailable."""


class NoReturn(ElastorayError):
    """Ray exceeded max arclength before returning to the reference surface."""


class SingularSystem(ElastorayError):
    """Interface linear system is numerically singular (cond > 1e12)."""


class BundleBroken(ElastorayError):
    """Companion rays left the central ray's region sequence or failed."""


class CausticEncountered(ElastorayError):
    """Ray-bundle Jacobian became singular (focal point)."""


class ZeroLeadingAmplitude(ElastorayError):
    """Leading amplitude vanished where a normalization requires it."""


class UnderResolved(ElastorayError):
    """Grid spacing does not resolve the requested packet frequency."""


class ZeroPairing(ElastorayError):
    """All ladder pairings are numerically zero; no order can be fitted."""


class WraparoundRisk(ElastorayError):
    """Distribution support too close to the periodic grid boundary."""


class ParseError(ElastorayError):
    """Scenario file is not valid JSON (carries line/column context)."""


class ValidationError(ElastorayError):
    """Scenario violates a medium invariant (message names the invariant)."""
