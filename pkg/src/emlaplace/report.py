"""JSON run reports with a fixed field order and lossless floats."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields


@dataclass
class RunReport:
    command: str
    model: dict
    data: dict
    strategy: str | None
    theta_init: list
    theta_hat: list
    em: dict
    grad_max_norm: float | None = None
    hessian: list | None = None
    covariance: list | None = None
    log_det_neg_lambda: float | None = None
    log_evidence: float | None = None
    diagnostic: str | None = None
    timings: dict | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = [f.name for f in fields(cls)]
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**{k: d[k] for k in names if k in d})

    def dumps(self):
        return dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "tolist"):
        return _encode(obj.tolist(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2) -> str:
    """JSON text preserving dict insertion order; floats written with 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"
