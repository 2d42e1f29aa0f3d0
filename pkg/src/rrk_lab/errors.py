"""Exception hierarchy for rrk_lab.

Every error raised by the library derives from :class:`RRKError`, so callers
(the CLI in particular) can map whole families onto exit codes.
"""

from __future__ import annotations


class RRKError(Exception):
    """Base class for all library errors."""


class ConfigError(RRKError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class UnknownMethod(ConfigError, KeyError):
    def __init__(self, name: str, known: list[str] | None = None):
        msg = f"unknown method {name!r}"
        if known:
            msg += f"; registered methods: {', '.join(known)}"
        ConfigError.__init__(self, msg, key="method")
        self.name = name

    def __str__(self) -> str:
        return self.args[0]


class NotExplicit(RRKError, ValueError):
    pass


class NotPartitioned(RRKError, ValueError):
    pass


class NotApplicable(RRKError, ValueError):
    pass


class PreconditionViolated(RRKError, ValueError):
    pass


class MissingDataFile(RRKError, FileNotFoundError):
    pass


class NumericalError(RRKError, ArithmeticError):
    """Failure of a numerical procedure during integration or analysis.

    ``step_index`` is filled in by :func:`rrk_lab.integrators.integrate` when
    the error escapes from a time step.
    """

    step_index: int | None = None


class NonFiniteState(NumericalError):
    pass


class NewtonDivergence(NumericalError):
    pass


class DegenerateDirection(NumericalError):
    pass


class BracketFailure(NumericalError):
    pass


class ToleranceNotMet(NumericalError):
    pass


class DomainViolation(NumericalError):
    pass


class ReferenceUnavailable(NumericalError):
    pass


class SaturatedWindow(NumericalError):
    pass


class DegenerateCloud(NumericalError):
    """All points of a cloud are collinear; the hull has zero area."""

    area = 0.0
