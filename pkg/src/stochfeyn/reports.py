"""Report containers shared by the verification modules, with JSON/CSV writers."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.complexfloating):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def dumps(obj) -> str:
    """JSON text with every float written at 17 significant digits."""
    return _dump_precise(_plain(obj))


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")


def _dump_precise(data, indent=0) -> str:
    pad = "  " * indent
    if isinstance(data, dict):
        if not data:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_dump_precise(v, indent + 1)}'
                 for k, v in sorted(data.items())]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(data, list):
        if not data:
            return "[]"
        return "[" + ", ".join(_dump_precise(v, indent + 1) for v in data) + "]"
    if isinstance(data, float):
        if data != data or data in (float("inf"), float("-inf")):
            return json.dumps(str(data))
        return format(data, ".17g")
    return json.dumps(data)


@dataclass
class ResidualReport:
    check: str
    max_residual: float
    tolerance: float
    grid: dict = field(default_factory=dict)
    dt: float | None = None
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def write_json(self, path) -> None:
        write_json(path, self.to_dict())


def write_csv(path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c) for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")
