"""Canonical JSON serialization.

Documents that must round-trip byte-identically (model files, motion files,
service payloads) are serialized with sorted keys, 2-space indent, and floats
quantized to 9 significant decimal digits. Quantization is idempotent, so
load -> save is byte-stable.
"""

from __future__ import annotations

import json
from typing import Any

__all__ = ["canonical_json", "quantize_floats"]


def _quantize(x: float) -> float:
    if x == 0.0:
        return 0.0
    q = float(f"{x:.9g}")
    # Avoid negative zero so the byte form is unique.
    return q if q != 0.0 else 0.0


def quantize_floats(obj: Any) -> Any:
    """Recursively quantize every float in a JSON-like structure."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return _quantize(obj)
    if isinstance(obj, dict):
        return {k: quantize_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [quantize_floats(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> bytes:
    """Serialize to canonical JSON bytes (sorted keys, trailing newline)."""
    data = json.dumps(
        quantize_floats(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False
    )
    return (data + "\n").encode("utf-8")
