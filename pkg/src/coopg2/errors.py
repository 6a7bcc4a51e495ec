"""Exception types raised across the package."""


class Coopg2Error(Exception):
    """Base class for all package errors."""


class InvalidRates(Coopg2Error, ValueError):
    pass


class DegenerateSteadyState(Coopg2Error):
    pass


class NoPumpNoDecay(Coopg2Error):
    pass


class NegativeFrequency(Coopg2Error, ValueError):
    pass


class QuadratureFailure(Coopg2Error):
    pass


class BondOverflow(Coopg2Error):
    pass


class GridMismatch(Coopg2Error, ValueError):
    pass


class ZeroIntensity(Coopg2Error):
    pass


class NotStationary(Coopg2Error):
    pass


class DomainError(Coopg2Error, ValueError):
    pass


class NonConvergence(Coopg2Error):
    pass


class GridTooCoarse(Coopg2Error, ValueError):
    pass


class DisjointSupport(Coopg2Error, ValueError):
    pass


class ConfigError(Coopg2Error, ValueError):
    """Config problem, optionally pointing at a line and field."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
