"""Exception taxonomy shared across the package.

Every error carries a stable ``code`` so the HTTP layer and the CLI can
translate failures without string matching.
"""

from __future__ import annotations


class DpCommError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class MalformedSelectionError(DpCommError):
    """Concern selection contains ids outside the 1..7 taxonomy."""

    code = "malformed-selection"


class MalformedInputError(DpCommError):
    """Input value is outside the mechanism's domain or not usable."""

    code = "malformed-input"


class ClampViolationError(DpCommError):
    """Numeric input falls outside the configured clamp interval."""

    code = "clamp-violation"


class BudgetExhaustedError(DpCommError):
    """Privacy-budget ledger cannot cover the requested query."""

    code = "budget-exhausted"


class UndefinedQueryError(DpCommError):
    """Query has no defined answer (e.g. mean of an empty dataset)."""

    code = "undefined-query"


class UnsupportedMechanismError(DpCommError):
    """Mechanism cannot be verified by exhaustive enumeration."""

    code = "unsupported-mechanism"


class MissingTemplateError(DpCommError):
    """No text template exists for the requested scenario / DP level."""

    code = "missing-template"


class RegistryLoadError(DpCommError):
    """Design registry manifest is missing, malformed, or inconsistent."""

    code = "registry-load"


class StateTransitionError(DpCommError):
    """Session operation attempted from a state that forbids it."""

    code = "state-transition"


class LocalDpViolationError(DpCommError):
    """Raw-flagged value submitted to a session that requires local DP."""

    code = "local-dp-violation"


class AuthorizationError(DpCommError):
    """Operator credential is missing or wrong."""

    code = "authorization"


class NotFoundError(DpCommError):
    """Referenced session or design does not exist."""

    code = "not-found"


class ValidationError(DpCommError):
    """Request is syntactically fine but semantically invalid."""

    code = "validation"
