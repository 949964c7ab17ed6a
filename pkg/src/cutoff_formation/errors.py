"""Exception types shared across the package."""

from __future__ import annotations


class FormationError(Exception):
    """Base class for all package errors."""


class InvalidGraphError(FormationError, ValueError):
    """Adjacency matrix or leader mask violates the graph invariants."""


class DomainError(FormationError, ValueError):
    """A function was evaluated outside of its domain (e.g. a negative distance)."""


class UnsupportedAttitudeError(FormationError, ValueError):
    """Requested acceleration would need inverted flight (u_z + g <= 0)."""


class InfeasibleGainsError(FormationError):
    """Controller gains do not satisfy the stability conditions."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ScenarioError(FormationError, ValueError):
    """Scenario document is malformed or violates an invariant.

    ``key`` is the dotted path of the offending entry (e.g. ``potential.lambda``),
    ``line``/``column`` are set for syntax errors.
    """

    def __init__(self, message: str, key: str | None = None,
                 line: int | None = None, column: int | None = None):
        self.key = key
        self.line = line
        self.column = column
        where = []
        if key:
            where.append(key)
        if line is not None:
            where.append(f"line {line}, column {column}")
        prefix = f"[{'; '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class CollisionError(FormationError):
    """Two objects came closer than the hard collision radius.

    The partial trace (up to and including the offending step) is attached.
    """

    def __init__(self, time: float, pair: tuple, distance: float, trace=None):
        super().__init__(f"collision at t={time:.6g} s between {pair[0]} and {pair[1]} "
                         f"(d={distance:.6g} m)")
        self.time = time
        self.pair = pair
        self.distance = distance
        self.trace = trace
