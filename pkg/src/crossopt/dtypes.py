"""Scalar data types shared by the catalog, plan IR, executor and featurizer."""

from __future__ import annotations

import datetime as dt
import math
from typing import Any

DATA_TYPES = ("integer", "float", "decimal", "varchar", "boolean", "date", "timestamp")

NUMERIC = frozenset({"integer", "float", "decimal"})
TEMPORAL = frozenset({"date", "timestamp"})

# Byte widths for fixed-width types. varchar has no fixed width.
TYPE_WIDTH = {
    "integer": 8,
    "float": 8,
    "decimal": 16,
    "boolean": 1,
    "date": 4,
    "timestamp": 8,
}
# Width assumed for computed varchar values whose length is unknown.
VARCHAR_DEFAULT_WIDTH = 20

EPOCH = dt.date(1970, 1, 1)


def check_type(name: str) -> str:
    if name not in DATA_TYPES:
        raise ValueError(f"unknown data type {name!r}")
    return name


def comparable(a: str, b: str) -> bool:
    """Whether values of the two types may be compared with =, <, etc."""
    if a in NUMERIC and b in NUMERIC:
        return True
    return a == b


def value_size(dtype: str, value: Any) -> int:
    """Encoded size in bytes of one value."""
    if dtype == "varchar":
        return 0 if value is None else len(value.encode("utf-8"))
    return TYPE_WIDTH[dtype]


def is_valid_value(dtype: str, value: Any) -> bool:
    if value is None:
        return True
    if dtype == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if dtype in ("float", "decimal"):
        return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    if dtype == "varchar":
        return isinstance(value, str)
    if dtype == "boolean":
        return isinstance(value, bool)
    if dtype == "date":
        return isinstance(value, dt.date) and not isinstance(value, dt.datetime)
    if dtype == "timestamp":
        return isinstance(value, dt.datetime)
    return False


def to_json(dtype: str, value: Any) -> Any:
    if value is None:
        return None
    if dtype in ("date", "timestamp"):
        return value.isoformat()
    if dtype in ("float", "decimal"):
        return float(value)
    return value


def from_json(dtype: str, raw: Any) -> Any:
    """Inverse of :func:`to_json`; raises ValueError on a mismatch."""
    if raw is None:
        return None
    if dtype == "date":
        return dt.date.fromisoformat(raw)
    if dtype == "timestamp":
        return dt.datetime.fromisoformat(raw)
    if dtype in ("float", "decimal"):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ValueError(f"expected number, got {raw!r}")
        return float(raw)
    if not is_valid_value(dtype, raw):
        raise ValueError(f"value {raw!r} is not a valid {dtype}")
    return raw


def sql_literal(dtype: str, value: Any) -> str:
    """Render a value as SQL literal text accepted by the parser."""
    if value is None:
        return "NULL"
    if dtype == "varchar":
        return "'" + value.replace("'", "''") + "'"
    if dtype == "boolean":
        return "TRUE" if value else "FALSE"
    if dtype == "date":
        return f"DATE '{value.isoformat()}'"
    if dtype == "timestamp":
        return f"TIMESTAMP '{value.isoformat(sep=' ')}'"
    if dtype == "float":
        text = repr(float(value))
        return text if ("e" in text or "E" in text) else text + "e0"
    if dtype == "decimal":
        text = repr(float(value))
        if "e" in text or "E" in text:
            text = f"{value:.6f}"
        return text if "." in text else text + ".0"
    return str(value)


def cast_value(value: Any, source: str, target: str) -> Any:
    """Convert ``value`` of type ``source`` to ``target``; ValueError if impossible."""
    if value is None:
        return None
    if source == target:
        return value
    if target == "integer":
        if source == "varchar":
            return int(value.strip())
        if source == "boolean":
            return int(value)
        if source in NUMERIC:
            return int(round(value))
    elif target in ("float", "decimal"):
        if source == "varchar":
            out = float(value.strip())
            if not math.isfinite(out):
                raise ValueError(f"non-finite {target}")
            return out
        if source in NUMERIC or source == "boolean":
            return float(value)
    elif target == "varchar":
        if source == "boolean":
            return "true" if value else "false"
        if source in TEMPORAL:
            return value.isoformat(sep=" ") if source == "timestamp" else value.isoformat()
        return repr(value) if isinstance(value, float) else str(value)
    elif target == "boolean":
        if source == "varchar":
            low = value.strip().lower()
            if low in ("true", "t", "1"):
                return True
            if low in ("false", "f", "0"):
                return False
        elif source in NUMERIC:
            return value != 0
    elif target == "date":
        if source == "varchar":
            return dt.date.fromisoformat(value.strip())
        if source == "timestamp":
            return value.date()
    elif target == "timestamp":
        if source == "varchar":
            return dt.datetime.fromisoformat(value.strip())
        if source == "date":
            return dt.datetime(value.year, value.month, value.day)
    raise ValueError(f"cannot cast {source} to {target}")
