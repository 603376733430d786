"""Small shared helpers: canonical JSON, hashing, exact rounding, addresses."""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from typing import Any


def compact_json(obj: Any) -> str:
    """Single-line JSON with no whitespace; key order = insertion order."""
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def pretty_json(obj: Any) -> str:
    """Two-space indented JSON with trailing newline; key order preserved."""
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def fingerprint(obj: Any) -> str:
    """Short stable hash of a JSON-serializable object."""
    return sha256_hex(json.dumps(obj, sort_keys=True, separators=(",", ":")))[:16]


def round_half_up(value: Fraction, digits: int = 0) -> Fraction:
    """Exact half-up rounding of a Fraction to `digits` decimal places."""
    scale = 10**digits
    scaled = value * scale
    q, r = divmod(scaled.numerator, scaled.denominator)
    if 2 * r >= scaled.denominator:
        q += 1
    return Fraction(q, scale)


def ratio_percent(numerator: int, denominator: int, digits: int = 1) -> float:
    """Percentage numerator/denominator rounded half-up to `digits` decimals."""
    if denominator == 0:
        return 0.0
    return float(round_half_up(Fraction(100 * numerator, denominator), digits))


def parse_address(text: str, field: str = "address") -> int:
    """Parse a hex address string of the form 0x1234ab."""
    from .errors import SchemaViolation

    if not isinstance(text, str) or not text.lower().startswith("0x"):
        raise SchemaViolation(f"{field}: expected hex string like '0x1234', got {text!r}")
    try:
        return int(text, 16)
    except ValueError as exc:
        raise SchemaViolation(f"{field}: invalid hex string {text!r}") from exc


def format_address(value: int) -> str:
    return f"0x{value:08x}"
