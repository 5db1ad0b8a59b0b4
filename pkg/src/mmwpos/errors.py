"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for simple argument violations (negative
bandwidth, distance below the model reference, mismatched sample rates).
The classes here mark failures a caller may want to handle specifically,
such as recovering the best iterate from a solver that did not converge.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for errors raised by mmwpos."""


class MapFormatError(ToolkitError):
    """A map file could not be parsed or violates a map invariant."""


class ObservationFormatError(ToolkitError):
    """An observation CSV row is malformed.  Messages carry line numbers."""


class DegenerateGeometryError(ToolkitError):
    """Measurement geometry does not pin down a position (e.g. parallel bearings)."""


class FeasibilityError(ToolkitError):
    """An observation is geometrically impossible for the given anchors."""


class CoverageError(ToolkitError):
    """No region is consistent with every anchor's communication range."""


class ConvergenceError(ToolkitError):
    """Iterative solver hit its iteration limit.

    The best iterate found so far is kept in ``best_estimate`` so callers
    can still inspect it.
    """

    def __init__(self, message: str, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
