"""Structured run reports serialized as JSON."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class Check:
    name: str
    value: float
    tol: float | None
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    name: str
    checks: list[Check] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    def check(self, name: str, deviation: float, tol: float, detail: str = "") -> bool:
        """Record ``deviation <= tol`` as a named check."""
        deviation = float(deviation)
        ok = bool(deviation <= tol)
        self.checks.append(Check(name, deviation, tol, ok, detail))
        return ok

    def flag(self, name: str, passed: bool, value: float = float("nan"), detail: str = "") -> bool:
        self.checks.append(Check(name, float(value), None, bool(passed), detail))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "value": c.value, "tol": c.tol,
                 "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            **self.extra,
        }

    def to_json(self, **kw) -> str:
        return dumps(self.to_dict(), **kw)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj, **kw) -> str:
    """JSON with NaN -> null and +-inf -> "inf"/"-inf" so output stays strict JSON."""
    kw.setdefault("indent", 2)
    kw.setdefault("sort_keys", True)
    return json.dumps(_clean(obj), allow_nan=False, **kw)
