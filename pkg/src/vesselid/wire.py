"""Canonical NDJSON helpers shared by the detection and pose streams.

Canonical form: object keys sorted, floats rendered with exactly six
decimals, compact separators. Serializing a parsed canonical line
reproduces it byte for byte, which the replay and determinism tests rely on.
"""

from __future__ import annotations

import json
from typing import Any


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, str):
        return json.dumps(value)
    if value is None:
        return "null"
    if isinstance(value, dict):
        items = ",".join(f"{json.dumps(k)}:{_render(value[k])}" for k in sorted(value))
        return "{" + items + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_render(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def canonical_dumps(obj: Any) -> str:
    """One canonical JSON line (no trailing newline)."""
    return _render(obj)
