"""Scenario configuration: one ``dotted.key = value`` per line, ``#`` comments.

Values are parsed as int, float, bool (``true``/``false``), comma-separated
lists of those, or left as strings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

COMMANDS = ("potential", "reduced", "bifurcate", "simulate", "validate")

# key -> (type, default); None marks "required when used"
SCHEMA: dict[str, tuple[type, object]] = {
    "command": (str, None),
    "domain.kind": (str, "dumbbell"),
    "domain.k": (float, 0.0),
    "domain.c": (float, 0.0),
    "domain.r": (float, 0.1),
    "kinetics.k0": (float, 0.05),
    "kinetics.gamma0": (float, 0.79),
    "mass.M": (float, None),
    "mass.w_star": (float, None),
    "model.eps2": (float, 0.001),
    "model.D": (float, 1.0),
    "potential.w": (float, None),
    "potential.grid_n": (int, 512),
    "bifurcate.param": (str, None),
    "bifurcate.min": (float, None),
    "bifurcate.max": (float, None),
    "bifurcate.n": (int, 56),
    "reduced.s0": (float, 0.0),
    "reduced.w0": (float, None),
    "reduced.t_end": (float, 100.0),
    "reduced.mode": (str, "composite"),
    "pde.N": (int, 512),
    "pde.dt": (float, None),
    "pde.t_end": (float, 1000.0),
    "pde.sample_dt": (float, 10.0),
    "pde.s0": (float, 1.0),
    "pde.include_ut": (bool, False),
    "validate.s0": (list, None),
    "validate.sweep": (list, None),
    "validate.speed_factor": (float, 2.0),
    "validate.width_tol": (float, 0.05),
    "output.dir": (str, "out"),
    "seed": (int, 0),
}


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _parse_value(text: str):
    if "," in text:
        return [_scalar(p.strip()) for p in text.split(",") if p.strip()]
    return _scalar(text)


def _coerce(key: str, value, line: int):
    kind = SCHEMA[key][0]
    where = f"line {line}, key {key!r}"
    if kind is list:
        return [float(v) for v in (value if isinstance(value, list) else [value])]
    if isinstance(value, list):
        raise ConfigError(f"{where}: expected a single {kind.__name__}, got a list")
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where}: value must be finite")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    return str(value)


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=dict)
    source: str = "<memory>"

    def __getitem__(self, key: str):
        if key in self.values:
            return self.values[key]
        if key not in SCHEMA:
            raise KeyError(key)
        return SCHEMA[key][1]

    def get(self, key: str, default=None):
        value = self[key]
        return default if value is None else value

    def require(self, key: str):
        value = self[key]
        if value is None:
            raise ConfigError(f"{self.source}: missing required key {key!r}")
        return value

    @property
    def command(self) -> str:
        return self.require("command")

    @property
    def eps(self) -> float:
        eps2 = self["model.eps2"]
        if not eps2 > 0.0:
            raise ConfigError(f"{self.source}: model.eps2 must be positive")
        return math.sqrt(eps2)

    def domain_mapping(self) -> dict:
        kind = self["domain.kind"]
        if kind == "disk":
            return {"kind": "disk"}
        if kind == "dumbbell":
            return {"kind": "dumbbell", "k": self["domain.k"]}
        if kind == "perforated_disk":
            return {"kind": "perforated_disk", "c": self["domain.c"], "r": self["domain.r"]}
        raise ConfigError(f"{self.source}: unknown domain.kind {kind!r}")

    def echo(self) -> dict:
        return {k: self[k] for k in sorted(set(SCHEMA) | set(self.values)) if self[k] is not None}


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}: line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"{source}: line {lineno}: empty value for {key!r}")
        values[key] = _coerce(key, _parse_value(value), lineno)
    cfg = ScenarioConfig(values, source)
    if "command" in values and values["command"] not in COMMANDS:
        raise ConfigError(f"{source}: unknown command {values['command']!r}; expected one of {', '.join(COMMANDS)}")
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
