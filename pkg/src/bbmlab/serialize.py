"""Small shared helpers for deterministic text output."""

from __future__ import annotations

import hashlib


def fmt_float(x) -> str:
    """Format a number with 17 significant digits (lossless float64 round-trip)."""
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
