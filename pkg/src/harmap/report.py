"""Check reports: named residuals with tolerances and a deterministic JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


def _clean(value):
    """JSON-safe copy; non-finite floats become strings so output stays standard JSON."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return value if math.isfinite(value) else repr(value)
    if hasattr(value, "item") and getattr(value, "ndim", None) == 0:
        return _clean(value.item())
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    raise TypeError(f"cannot serialize {type(value).__name__}")


@dataclass
class CheckReport:
    """Residuals with optional tolerances.

    A residual whose tolerance is ``None`` is informational. The report passes
    when every toleranced residual is within tolerance, no error occurred and
    at least one leg actually ran; a report whose legs were all skipped is
    ``skipped``, never ``pass``.
    """

    check_id: str
    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    error: str | None = None
    metadata: dict = field(default_factory=dict)

    def add(self, name, value, tol=None):
        self.residuals[name] = float(value)
        self.tolerances[name] = None if tol is None else float(tol)
        return self

    def note(self, name, value):
        self.info[name] = value
        return self

    def skip(self, leg, reason):
        self.skipped.append({"leg": leg, "reason": reason})
        return self

    def failures(self):
        out = []
        for name, value in self.residuals.items():
            tol = self.tolerances.get(name)
            if tol is not None and not value <= tol:
                out.append(name)
        return out

    @property
    def status(self):
        if self.error is not None:
            return FAIL
        if any(t is not None for t in self.tolerances.values()):
            return FAIL if self.failures() else PASS
        return SKIPPED if self.skipped else PASS

    @property
    def passed(self):
        return self.status == PASS

    def to_dict(self):
        return _clean({
            "check_id": self.check_id,
            "status": self.status,
            "residuals": self.residuals,
            "tolerances": self.tolerances,
            "info": self.info,
            "skipped": self.skipped,
            "warnings": self.warnings,
            "error": self.error,
            "metadata": self.metadata,
        })

    @classmethod
    def from_dict(cls, d):
        def num(v):
            return float(v) if isinstance(v, str) else v
        return cls(d["check_id"], {k: num(v) for k, v in d["residuals"].items()},
                   {k: num(v) for k, v in d["tolerances"].items()}, d.get("info", {}),
                   d.get("skipped", []), d.get("warnings", []), d.get("error"), d.get("metadata", {}))

    def summary(self):
        worst = ", ".join(f"{k}={v:.3e}" for k, v in self.residuals.items() if self.tolerances.get(k) is not None)
        return f"{self.status.upper():7s} {self.check_id}: {worst or '-'}"


def dumps(reports):
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True, allow_nan=False) + "\n"


def loads(text):
    return [CheckReport.from_dict(d) for d in json.loads(text)]
