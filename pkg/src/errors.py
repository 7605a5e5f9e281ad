# src/errors.py
from __future__ import annotations

from typing import Optional


class DcnError(Exception):
    pass


class InvalidShapeError(DcnError, ValueError):
    pass


class DimensionError(DcnError, ValueError):
    def __init__(self, axis: str, expected, got):
        self.axis = axis
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch on axis '{axis}': expected {expected}, got {got}")


class FixtureFormatError(DcnError):
    def __init__(self, message: str, offset: int, path: Optional[str] = None):
        self.offset = offset
        self.path = path
        where = f"{path}@{offset}" if path else f"offset {offset}"
        super().__init__(f"{message} ({where})")


class PlanError(DcnError, ValueError):
    pass


class UnsupportedConfigError(DcnError):
    pass


class ConfigError(DcnError, ValueError):
    pass
