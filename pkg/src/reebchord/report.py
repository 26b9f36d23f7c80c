"""Run configuration, report envelope, and JSON/CSV emission."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np
import yaml

from .moment_region import BUILDERS

SCHEMA_VERSION = 1
TOOL_NAME = "reebchord"
TOOL_VERSION = "0.1.0"
ENV_PREFIX = "REEBCHORD_"
COMMANDS = ("capacities", "orbits", "chords", "verify", "perturb-study", "counterexample", "plot-data")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class PerturbConfig:
    amplitudes: list = field(default_factory=lambda: [0.01, 0.02])
    width: float = 0.5
    count: int = 3


@dataclass
class RunConfig:
    command: str = "verify"
    builder: str = "ellipsoid"
    params: dict = field(default_factory=lambda: {"axes": [1.0, 2.0]})
    height: int = 50
    chord_height: int = 20
    grid: int = 4097
    threads: int = 1
    seed: int = 0
    tol_claim: float = 1e-6
    t_max: Optional[float] = None
    chord_grid: list = field(default_factory=lambda: [8, 400])
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    out: Optional[str] = None
    format: str = "json"

    def echo(self) -> dict:
        """Configuration as it appears in the report (output location excluded)."""
        d = asdict(self)
        d.pop("out")
        return d


# name -> (type, lower, upper); bounds are inclusive unless noted in _check
_BOUNDS = {
    "height": (int, 1, 500),
    "chord_height": (int, 1, 200),
    "grid": (int, 65, 100_001),
    "threads": (int, 1, 256),
    "seed": (int, 0, 2**64 - 1),
    "tol_claim": (float, 0.0, 1e-2),
    "t_max": (float, 0.0, 100.0),
}
_TOP_KEYS = {"command", "domain", "height", "chord_height", "grid", "threads", "seed", "tol_claim",
             "t_max", "chord_grid", "perturb", "out", "format"}


def _number(key, value, kind, lo, hi):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{key} must be an integer")
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value) or value <= lo:
            raise ConfigError(f"{key} must be > {lo}")
    if value < lo or value > hi:
        raise ConfigError(f"{key} = {value} outside [{lo}, {hi}]")
    return value


def _apply(cfg: RunConfig, data: dict, source: str) -> None:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) in {source}: {sorted(unknown)}")
    for key, value in data.items():
        if key == "command":
            if value not in COMMANDS:
                raise ConfigError(f"unknown command {value!r}; choose from {list(COMMANDS)}")
            cfg.command = value
        elif key == "domain":
            if not isinstance(value, dict) or set(value) - {"builder", "params"} or "builder" not in value:
                raise ConfigError("domain must be a mapping with keys 'builder' and optional 'params'")
            if value["builder"] not in BUILDERS:
                raise ConfigError(f"unknown builder {value['builder']!r}; choose from {sorted(BUILDERS)}")
            params = value.get("params") or {}
            if not isinstance(params, dict):
                raise ConfigError("domain.params must be a mapping")
            cfg.builder, cfg.params = value["builder"], dict(params)
        elif key in _BOUNDS:
            if key == "t_max" and value is None:
                cfg.t_max = None
                continue
            setattr(cfg, key, _number(key, value, *_BOUNDS[key]))
        elif key == "chord_grid":
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError("chord_grid must be [s_count, t_count]")
            cfg.chord_grid = [_number("chord_grid[0]", value[0], int, 1, 256),
                              _number("chord_grid[1]", value[1], int, 10, 100_000)]
        elif key == "perturb":
            if not isinstance(value, dict) or set(value) - {"amplitudes", "width", "count"}:
                raise ConfigError("perturb accepts keys amplitudes, width, count")
            p = cfg.perturb
            if "amplitudes" in value:
                amps = value["amplitudes"]
                if not isinstance(amps, list) or not amps:
                    raise ConfigError("perturb.amplitudes must be a non-empty list")
                p.amplitudes = [0.0 if a == 0 else _number("amplitude", a, float, 0.0, 0.5) for a in amps]
            if "width" in value:
                p.width = _number("perturb.width", value["width"], float, 0.0, math.pi)
            if "count" in value:
                p.count = _number("perturb.count", value["count"], int, 1, 64)
        elif key == "out":
            cfg.out = None if value is None else str(value)
        elif key == "format":
            if value not in ("json", "csv"):
                raise ConfigError("format must be 'json' or 'csv'")
            cfg.format = value


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None,
                environ: Optional[dict] = None) -> RunConfig:
    """Defaults, then the YAML file, then ``REEBCHORD_*`` variables, then ``overrides``."""
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
        _apply(cfg, data, path)
    env = os.environ if environ is None else environ
    from_env = {}
    for name, raw in env.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            try:
                from_env[key] = yaml.safe_load(raw)
            except yaml.YAMLError:
                raise ConfigError(f"cannot parse {name}") from None
    _apply(cfg, from_env, "environment")
    _apply(cfg, {k: v for k, v in (overrides or {}).items() if v is not None}, "command line")
    return cfg


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and dataclass-free containers to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _fmt_float(x: float) -> str:
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits and sorted keys."""
    obj = _plain(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        return _fmt_float(obj)
    return json.dumps(obj)


ENVELOPE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "tool", "command", "config", "payload", "warnings", "status",
                 "payload_sha256", "created"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "tool": {
            "type": "object",
            "required": ["name", "version"],
            "properties": {"name": {"type": "string"}, "version": {"type": "string"}},
        },
        "command": {"enum": list(COMMANDS)},
        "config": {"type": "object", "required": ["builder", "params", "seed"]},
        "payload": {"type": "object", "required": ["tolerances"],
                    "properties": {"tolerances": {"type": "object"}}},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "status": {"enum": ["ok", "verdict-failure"]},
        "payload_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "created": {"type": "string"},
        "files": {"type": "array", "items": {"type": "string"}},
    },
}


def payload_digest(config: dict, payload: dict) -> str:
    """Hash of the deterministic part of an envelope (config echo and payload)."""
    text = dumps({"config": config, "payload": payload})
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class ReportEnvelope:
    command: str
    config: dict
    payload: dict
    warnings: list
    status: str = "ok"
    created: str = ""
    files: list = field(default_factory=list)

    def to_dict(self) -> dict:
        config, payload = _plain(self.config), _plain(self.payload)
        d = {
            "schema_version": SCHEMA_VERSION,
            "tool": {"name": TOOL_NAME, "version": TOOL_VERSION},
            "command": self.command,
            "config": config,
            "payload": payload,
            "warnings": [str(w) for w in self.warnings],
            "status": self.status,
            "payload_sha256": payload_digest(config, payload),
            "created": self.created,
        }
        if self.files:
            d["files"] = list(self.files)
        return d

    def to_json(self) -> str:
        """Serialized envelope, validated by re-parsing against the schema."""
        text = dumps(self.to_dict()) + "\n"
        validate(json.loads(text))
        return text


def validate(doc: dict) -> None:
    jsonschema.validate(doc, ENVELOPE_SCHEMA)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_csv(path, header, rows) -> str:
    """Write rows with a mandatory header; floats at 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt_float(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return str(path)


def trajectory_header(dim: int) -> list:
    cols = ["t"]
    for i in range(1, dim // 2 + 1):
        cols += [f"x{i}", f"y{i}"]
    return cols + ["H", "lambdaR"]
