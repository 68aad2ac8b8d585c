"""Error taxonomy shared by every service module.

Every domain failure raises :class:`MetapixError` with a stable machine
code. The HTTP facade maps codes to status codes without renaming them,
so the code a module raises is the code a client sees.
"""

from __future__ import annotations

from typing import Any


class MetapixError(Exception):
    """Domain error with a stable machine-readable code.

    Attributes:
        code: stable identifier such as ``ACCESS_DENIED`` or ``QUERY_PARSE_ERROR``.
        message: human-readable description.
        details: optional structured context (offsets, missing uris, ...).
    """

    def __init__(self, code: str, message: str, details: dict[str, Any] | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.details:
            out["details"] = self.details
        return out


# HTTP status mapping. Codes not listed here map per the rules in
# http_status(); unknown codes default to 400 (client-side validation).
_STATUS_BY_CODE = {
    "UNAUTHENTICATED": 401,
    "ACCESS_DENIED": 403,
    "CONFLICT": 409,
    "STORAGE_IO": 500,
}


def http_status(code: str) -> int:
    """Deterministic HTTP status for an error code."""
    if code in _STATUS_BY_CODE:
        return _STATUS_BY_CODE[code]
    if code.startswith("UNKNOWN_"):
        return 404
    return 400
