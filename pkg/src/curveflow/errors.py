"""Exception hierarchy shared by all curveflow modules."""


class CurveflowError(Exception):
    """Base class for every error raised by the package."""


class DegenerateSegment(CurveflowError, ValueError):
    pass


class DimensionMismatch(CurveflowError, ValueError):
    pass


class SelfIntersectingCurve(CurveflowError, ValueError):
    pass


class TopologyMismatch(CurveflowError, ValueError):
    pass


class InvalidSpec(CurveflowError, ValueError):
    pass


class NonPositiveGamma(CurveflowError, ValueError):
    pass


class InvalidMobility(CurveflowError, ValueError):
    pass


class SingularSystem(CurveflowError, ArithmeticError):
    pass


class InvalidShape(CurveflowError, ValueError):
    pass


class ConfigError(CurveflowError, ValueError):
    pass


class IllPosedInitialCurve(CurveflowError, ValueError):
    pass


class EnergyIncrease(CurveflowError, ArithmeticError):
    """Energy grew between two steps although the anisotropy is certified."""

    def __init__(self, step, before, after):
        super().__init__(
            f"energy increased at step {step}: {before!r} -> {after!r}"
        )
        self.step = step
        self.before = before
        self.after = after
