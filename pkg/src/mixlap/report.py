"""Audit results and their deterministic serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np


@dataclass
class AuditReport:
    """Outcome of one inequality check.

    ``lhs``/``rhs`` hold the two sides where that makes sense (the worst case
    over whatever was swept), ``fitted`` the smallest validating constant, and
    ``tolerances`` every slack that entered the pass decision, by name.
    """

    name: str
    passed: bool
    lhs: float = float("nan")
    rhs: float = float("nan")
    fitted: float = float("nan")
    advisory: bool = False
    tolerances: Dict[str, float] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "advisory": bool(self.advisory),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "fitted": self.fitted,
            "tolerances": dict(self.tolerances),
            "details": dict(self.details),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        text = "%.17g" % obj
        if not any(c in text for c in ".en"):
            text += ".0"
        return text
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(k) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits.

    Non-finite floats become null. Key order is preserved, so equal inputs
    give byte-identical output.
    """
    return _encode(_plain(obj), indent, 0) + "\n"
