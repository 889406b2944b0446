"""Deterministic JSON reports.

Keys keep insertion order, floats are written with 17 significant digits
(enough to round-trip a double) and non-finite floats become ``null``.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="

    def to_dict(self):
        return {"name": self.name, "value": self.value, "relation": self.relation,
                "threshold": self.threshold, "passed": self.passed}


def check(name, value, threshold, relation="<="):
    """Build a :class:`Check`; ``relation`` is one of <=, >=, <, >."""
    ops = {"<=": np.less_equal, ">=": np.greater_equal, "<": np.less, ">": np.greater}
    v = float(value)
    ok = bool(np.isfinite(v) and ops[relation](v, threshold))
    return Check(name, v, float(threshold), ok, relation)


@dataclass
class ScenarioResult:
    kind: str
    name: str
    seed: int
    config_hash: str
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failing(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "kind": self.kind,
            "name": self.name,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "results": self.results,
            "artifacts": list(self.artifacts),
        }


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if np.isfinite(x) else "null"
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Path):
        return json.dumps(obj.as_posix(), ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, bool)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    return _encode(obj, indent, 0) + "\n"


def emit_report(results, path=None):
    """Serialize a result (or list of results); write to ``path`` if given."""
    text = dumps(results)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text
