"""Exception hierarchy shared by every finslerlab module."""


class FinslerError(Exception):
    """Base class for all errors raised by finslerlab."""


class OutOfChart(FinslerError):
    """A point lies outside the domain of the model chart."""


class DegenerateDirection(FinslerError):
    """A direction-dependent quantity was requested at y = 0."""


class NotPositiveDefinite(FinslerError):
    """The fundamental tensor lost positive definiteness."""


class NoConvergence(FinslerError):
    """An iterative solver stopped before reaching its tolerance."""


class GeodesicEscape(FinslerError):
    """A geodesic left the chart during integration."""


class CutLocusReached(FinslerError):
    """A polar sample lies beyond the cut locus of the base point."""


class BallClipped(FinslerError):
    """A forward ball touches the boundary of the computational grid."""


class StabilityFailure(FinslerError):
    """The heat solver produced a non-positive value from positive data."""


class DegenerateRegion(FinslerError):
    """Too few admissible nodes to evaluate an identity."""


class EigenFailure(FinslerError):
    """The sparse eigensolver failed to deliver the requested eigenpair."""


class SideMismatch(FinslerError):
    """A field fails the sub/supersolution gate required by a checker."""


class HypothesisFail(FinslerError):
    """The hypotheses of an abstract lemma do not hold on the supplied data."""

    def __init__(self, failed, message=None):
        self.failed = tuple(failed)
        super().__init__(message or f"hypotheses failed: {', '.join(self.failed)}")


class ResolutionFloor(FinslerError):
    """The grid is too coarse to resolve the requested construction."""

    def __init__(self, message, uncovered_fraction=None):
        self.uncovered_fraction = uncovered_fraction
        super().__init__(message)


class InvalidN(FinslerError):
    """Weighted Ricci curvature requested with N equal to the dimension."""


class ConfigError(FinslerError):
    """Base class for configuration problems."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [(None, None, problems)]
        self.problems = list(problems)
        super().__init__("; ".join(self._fmt(p) for p in self.problems))

    @staticmethod
    def _fmt(problem):
        key, line, reason = problem
        where = []
        if key:
            where.append(f"key '{key}'")
        if line:
            where.append(f"line {line}")
        return f"{' '.join(where)}: {reason}" if where else reason


class ParseError(ConfigError):
    """The configuration text is malformed or names unknown values."""


class ValidationError(ConfigError):
    """The configuration parses but violates a task precondition."""
