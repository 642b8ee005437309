"""Parse "5 MHz", "10 ms", "5 kbps" style quantities into SI floats."""

from __future__ import annotations

import math
import re
from decimal import Decimal, InvalidOperation

_PREFIX = {"": 0, "p": -12, "n": -9, "u": -6, "µ": -6, "m": -3, "k": 3, "K": 3, "M": 6, "G": 9}

# base unit spellings per quantity kind
_UNITS = {
    "frequency": {"Hz": 0},
    "time": {"s": 0, "sec": 0, "min": None, "h": None},
    "rate": {"bps": 0, "bit/s": 0, "b/s": 0},
    "power": {"W": 0},
    "bits": {"bit": 0, "bits": 0, "b": 0},
}
_TIME_SCALE = {"min": Decimal(60), "h": Decimal(3600)}

_PATTERN = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*?)?\s*$")

BASE_UNIT = {"frequency": "Hz", "time": "s", "rate": "bit/s", "power": "W", "bits": "bit"}


class UnitError(ValueError):
    pass


def _split(text: str):
    m = _PATTERN.match(text)
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    try:
        num = Decimal(m.group(1))
    except InvalidOperation:  # pragma: no cover - regex already filters
        raise UnitError(f"bad number in {text!r}") from None
    return num, (m.group(2) or "").strip()


def parse_quantity(value, kind: str) -> float:
    """Convert ``value`` to the SI base unit of ``kind``.

    Strings must carry a unit suffix.  Power also accepts dBm/dBW and
    "unbounded"/"inf"; ``dimensionless`` accepts bare numbers only.
    """
    if kind == "dimensionless":
        if isinstance(value, bool):
            raise UnitError(f"expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        try:
            return float(Decimal(str(value).strip()))
        except InvalidOperation:
            raise UnitError(f"expected a plain number, got {value!r}") from None
    if not isinstance(value, str):
        raise UnitError(
            f"{value!r} has no unit; write it with a suffix such as "
            f"'{value} {BASE_UNIT[kind]}'"
        )
    text = value.strip()
    if kind == "power" and text.lower() in ("unbounded", "inf", "infinity"):
        return math.inf
    num, unit = _split(text)
    if not unit:
        raise UnitError(f"{text!r} has no unit (expected {BASE_UNIT[kind]})")
    if kind == "power" and unit in ("dBm", "dBW"):
        shift = 30 if unit == "dBm" else 0
        return 10.0 ** ((float(num) - shift) / 10.0)
    table = _UNITS[kind]
    for base, exp in table.items():
        if unit.endswith(base):
            prefix = unit[: len(unit) - len(base)]
            if prefix not in _PREFIX:
                continue
            if exp is None:
                if prefix:
                    continue
                return float(num * _TIME_SCALE[base])
            return float(num.scaleb(_PREFIX[prefix] + exp))
    raise UnitError(f"unknown unit {unit!r} for a {kind} quantity")


def format_quantity(value: float, kind: str) -> str:
    """Inverse of :func:`parse_quantity` in the base unit; exact for floats."""
    if kind == "dimensionless":
        return repr(float(value))
    if kind == "power" and math.isinf(value):
        return "unbounded"
    return f"{float(value)!r} {BASE_UNIT[kind]}"
