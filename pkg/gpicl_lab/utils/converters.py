# Compiles regexes globally; config files are parsed once per run but sweeps
# parse hundreds of cell configs.
import hashlib
import re
from typing import Any

_RE_POWER = re.compile(r"^\s*([+-]?\d+)\s*\^\s*(\d+)\s*$")
_RE_INT = re.compile(r"^[+-]?\d+$")
_RE_FLOAT = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

_TRUE = {"true", "yes", "on"}
_FALSE = {"false", "no", "off"}


def parse_scalar(value: Any) -> Any:
    """
    Converts one config value from text to a Python scalar.

    Input -> Output:
        "2^13"   -> 8192
        "1e-8"   -> 1e-08
        "64"     -> 64
        "true"   -> True
        "none"   -> None
        "mnist"  -> "mnist"
    """
    if value is None or not isinstance(value, str):
        return value

    s = value.strip()
    if not s:
        return None

    # 1. Powers, mostly task counts
    if m := _RE_POWER.match(s):
        return int(m.group(1)) ** int(m.group(2))

    # 2. Plain numbers
    if _RE_INT.match(s):
        return int(s)
    if _RE_FLOAT.match(s):
        return float(s)

    # 3. Keywords
    lowered = s.lower()
    if lowered in ("none", "null"):
        return None
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False

    return s


def parse_list(value: Any) -> list[Any]:
    """Splits a comma list and converts each element: "1, 2^4, x" -> [1, 16, "x"]."""
    if isinstance(value, (list, tuple)):
        return [parse_scalar(v) for v in value]
    s = str(value).strip()
    if not s:
        return []
    return [parse_scalar(part) for part in s.split(",") if part.strip()]


def stable_hash64(*parts: Any) -> int:
    """
    Hashes the textual form of the parts into an unsigned 64-bit integer.

    Used for every seed derivation so task k is addressable from
    (global seed, stream label, base name, k) alone.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def format_float(value: float) -> str:
    """Formats floats for metrics files: 9 significant digits, stable across runs."""
    return f"{float(value):.9g}"
