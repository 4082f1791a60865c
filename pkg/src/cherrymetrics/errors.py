"""Exception hierarchy shared by all cherrymetrics modules."""

from __future__ import annotations


class CherryMetricsError(ValueError):
    """Base class for data errors raised by cherrymetrics."""


class ParseError(CherryMetricsError):
    """Input text could not be parsed (malformed XML, bad token count, ...)."""


class SchemaError(CherryMetricsError):
    """A required element, column or field is missing or renamed."""


class UnknownClassError(CherryMetricsError):
    pass


class RangeError(CherryMetricsError):
    """A value fell outside its permitted interval."""


class GeometryError(CherryMetricsError):
    """A box is inverted, degenerate, or otherwise invalid."""


class UnsupportedError(CherryMetricsError):
    pass


class LengthError(CherryMetricsError):
    pass


class EmptyRegionError(CherryMetricsError):
    pass


class JoinError(CherryMetricsError):
    pass


class PlacementError(CherryMetricsError):
    pass


class InsufficientSampleError(CherryMetricsError):
    pass


class ZeroVarianceError(CherryMetricsError):
    pass


class ShapeError(CherryMetricsError):
    pass


class NoMatchesError(CherryMetricsError):
    pass


class UndefinedRecallError(CherryMetricsError):
    pass


class ReferentialError(CherryMetricsError):
    pass


class EmptyInputError(CherryMetricsError):
    pass
