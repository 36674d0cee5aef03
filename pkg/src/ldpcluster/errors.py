"""Error types shared across the package.

Hard contract violations (bad dimensions, invalid parameters) raise plain
ValueError.  A RefusalError means the request was well formed but cannot be
served at the given parameters; the CLI maps it to exit code 2.
"""

from __future__ import annotations


class RefusalError(Exception):
    """Raised when an operation declines to run and says why.

    Attributes:
        code: short machine-readable reason code, e.g. "POOL_TOO_LARGE".
        detail: optional mapping with diagnostics (minimum feasible values,
            offending quantities).
    """

    def __init__(self, code: str, message: str, detail: dict | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.detail = dict(detail or {})
