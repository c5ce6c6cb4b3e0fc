"""Named failure types.

Every condition a caller might want to branch on gets its own class, so the
CLI can map them onto exit codes and the MCP tools onto readable messages
without string matching. Each class also derives from the closest builtin, so
``except ValueError`` style handlers in calling code keep working.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass


class SavannaError(Exception):
    """Base class for every error raised on purpose by this package."""


class RateInvalid(SavannaError, ValueError):
    """Rate parameters violate the model's standing assumptions (e.g. mu < nu)."""


class GeometryInvalid(SavannaError, ValueError):
    """Lattice geometry is inconsistent: box scale, torus side or window range."""


class StepTooLarge(SavannaError, ArithmeticError):
    """A fixed-step integrator left the simplex; the step size is too coarse."""


class InvariantBreach(SavannaError, ArithmeticError):
    """An IDE step produced a node outside {S, T >= 0, S + T <= 1}."""


class CouplingViolation(SavannaError, AssertionError):
    """chi >= eta >= xi failed at some site. Always an engine bug."""


class NoFeasibleConstants(SavannaError, ValueError):
    """The constant search found no admissible value (parameters too close to a boundary)."""


class HypothesisFails(SavannaError, ValueError):
    """The parameters do not satisfy the hypothesis the requested constants need."""


class GridTooCoarse(SavannaError, ValueError):
    """The grid spacing cannot resolve the ramps of the test functions."""


class LambdaTooLarge(SavannaError, ValueError):
    """The exponential weight is too steep for the extinction drift bound."""


class PopulationExplosion(SavannaError, RuntimeError):
    """The branching random walk exceeded the configured particle cap."""


class IoError(SavannaError, OSError):
    """Writing results or snapshots failed."""


class ConfigInvalid(SavannaError, ValueError):
    """The experiment configuration failed validation.

    ``field_path`` is the dotted location of the first offending key
    (``params.omega.delta0``), empty when the file itself is unreadable.
    """

    def __init__(self, message: str, field_path: str = "") -> None:
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


@dataclass(frozen=True)
class FailedTask:
    """One replica that raised instead of producing a record."""

    grid_index: int
    replica: int
    error: str


class PartialFailure(SavannaError, RuntimeError):
    """Some replicas failed; the completed ones were written regardless."""

    def __init__(self, failures: Sequence[FailedTask], completed: int) -> None:
        listed = ", ".join(f"({f.grid_index}, {f.replica})" for f in failures[:10])
        more = f" and {len(failures) - 10} more" if len(failures) > 10 else ""
        super().__init__(
            f"{len(failures)} replica(s) failed, {completed} completed: {listed}{more}"
        )
        self.failures = list(failures)
        self.completed = completed
