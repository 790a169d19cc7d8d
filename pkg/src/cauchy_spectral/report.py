"""Versioned JSON report envelope."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np

__all__ = ["ReportEnvelope", "SCHEMA", "jsonable", "tool_version"]

SCHEMA = 1


def tool_version() -> str:
    try:
        return metadata.version("cauchy-spectral")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, complex):
        return {"re": jsonable(obj.real), "im": jsonable(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


@dataclass
class ReportEnvelope:
    command: str
    scenario: dict
    sections: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    version: str = field(default_factory=tool_version)
    schema: int = SCHEMA

    def __post_init__(self):
        self.scenario = jsonable(self.scenario)
        self.sections = jsonable(self.sections)
        self.errors = jsonable(self.errors)
        self.timings = jsonable(self.timings)

    def add(self, name: str, value) -> None:
        self.sections[name] = jsonable(value)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self, timings: bool = True) -> dict:
        d = {"schema": self.schema, "version": self.version, "command": self.command,
             "scenario": self.scenario, "sections": self.sections, "errors": self.errors}
        if timings:
            d["timings"] = self.timings
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportEnvelope":
        d = json.loads(text)
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        return cls(d["command"], d["scenario"], d.get("sections", {}), d.get("errors", []),
                   d.get("timings", {}), d["version"], d["schema"])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReportEnvelope):
            return NotImplemented
        return self.to_dict() == other.to_dict()
