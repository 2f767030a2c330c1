"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class PecusumError(Exception):
    """Base class for library errors."""


class ShapeError(PecusumError, ValueError):
    """Array dimensions do not conform (curve vs grid, panel layout)."""


class InsufficientDataError(PecusumError, ValueError):
    """Too few observations for the requested estimator."""


class DegenerateDistributionError(PecusumError, ValueError):
    """The simulated null law would be a point mass at zero."""


class DegenerateSplitError(PecusumError, ValueError):
    """A sample split leaves an empty pre- or post-break segment."""


class NothingToClusterError(PecusumError, ValueError):
    """No subject was classified as carrying a break."""


class CalibrationError(PecusumError, ValueError):
    """Break magnitude cannot be calibrated for the requested SNR."""


class ConditionalMetricUndefined(PecusumError, ValueError):
    """A conditional metric was requested where its condition fails."""


class CompletenessError(PecusumError, ValueError):
    """An input file is missing (subject, time, grid) cells."""


class ParseError(PecusumError, ValueError):
    """An input file contains an unparsable value."""
