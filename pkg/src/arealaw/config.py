"""YAML experiment configuration with line-numbered validation errors.

A config file is a mapping with ``schema_version: 1``, optional ``seed`` and
``workers``, and an ``experiments`` list.  Each experiment names its ``kind``
(one of :data:`KINDS`) and the keys listed in :data:`SCHEMA` for that kind.
Subcommands other than ``run`` also accept a bare experiment mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

SCHEMA_VERSION = 1

MODEL_KEYS = {"type", "N", "extents", "periodic", "alpha", "J", "h", "terms_file"}
PATH_KEYS = {"start", "end", "gap_floor"}
FILTER_KEYS = {"sharpness", "x_max", "step"}

SCHEMA: dict[str, dict[str, set[str] | None]] = {
    "quench": {"required": {"model"}, "optional": {"name", "region", "initial", "t_max", "points", "method"}},
    "lr-truncation": {"required": {"model"}, "optional": {"name", "family", "v", "c1", "c2", "site", "radii",
                                                          "points", "haar_samples"}},
    "shells": {"required": {"path"}, "optional": {"name", "s", "anchors", "method", "filter"}},
    "qac": {"required": {"path"}, "optional": {"name", "region", "s_points", "filter", "bound"}},
    "ghz": {"required": set(), "optional": {"name", "sizes", "alphas", "gap", "points"}},
    "bounds": {"required": set(), "optional": {"name", "certificates", "bracket"}},
    "sweep": {"required": {"base", "grid"}, "optional": {"name"}},
}
KINDS = tuple(SCHEMA)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = f"{source or 'config'}:{line}: " if line else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


@dataclass
class Located:
    """Parsed YAML plus the source line of every mapping key and sequence item."""

    data: Any
    lines: dict[tuple, int] = field(default_factory=dict)
    source: str = "config"

    def line(self, path: tuple) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get((), None)

    def error(self, message: str, path: tuple = ()) -> ConfigError:
        return ConfigError(message, self.line(path), self.source)


def _construct(node, path: tuple, lines: dict) -> Any:
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = _scalar(k)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1)
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _construct(v, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return _scalar(node)


def _scalar(node) -> Any:
    return yaml.safe_load(yaml.serialize(node))


def parse_config_text(text: str, source: str = "config") -> Located:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None, source) from None
    lines: dict[tuple, int] = {}
    try:
        data = {} if root is None else _construct(root, (), lines)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.line, source) from None
    return Located(data, lines, source)


def load_config(path: str | Path) -> Located:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, str(p)) from None
    return parse_config_text(text, str(p))


# ----- validation ---------------------------------------------------------------

def _check_keys(cfg: Located, mapping: Any, path: tuple, required: set[str], allowed: set[str],
                what: str) -> None:
    if not isinstance(mapping, dict):
        raise cfg.error(f"{what} must be a mapping", path)
    missing = required - set(mapping)
    if missing:
        raise cfg.error(f"{what} is missing required key(s): {', '.join(sorted(missing))}", path)
    unknown = set(mapping) - allowed
    if unknown:
        key = sorted(unknown, key=str)[0]
        raise cfg.error(f"unknown key {key!r} in {what}", path + (key,))


def _check_number(cfg: Located, value: Any, path: tuple, positive: bool = False) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise cfg.error(f"{path[-1]} must be a number", path)
    if positive and value <= 0:
        raise cfg.error(f"{path[-1]} must be positive", path)


def validate_model(cfg: Located, model: Any, path: tuple) -> None:
    _check_keys(cfg, model, path, {"type", "alpha"}, MODEL_KEYS, "model")
    if model["type"] not in ("ising", "xy", "custom"):
        raise cfg.error(f"model type must be ising, xy or custom (got {model['type']!r})", path + ("type",))
    if model["type"] == "custom" and "terms_file" not in model:
        raise cfg.error("custom model needs terms_file", path)
    if ("N" in model) == ("extents" in model):
        raise cfg.error("model needs exactly one of N or extents", path)
    _check_number(cfg, model["alpha"], path + ("alpha",), positive=True)
    for key in ("J", "h"):
        if key in model:
            _check_number(cfg, model[key], path + (key,))
    if "N" in model and (not isinstance(model["N"], int) or model["N"] < 2):
        raise cfg.error("N must be an integer >= 2", path + ("N",))


def validate_experiment(cfg: Located, exp: Any, path: tuple, kind: str | None = None) -> str:
    if not isinstance(exp, dict):
        raise cfg.error("experiment must be a mapping", path)
    kind = exp.get("kind", kind)
    if kind not in SCHEMA:
        raise cfg.error(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}",
                        path + ("kind",))
    spec = SCHEMA[kind]
    _check_keys(cfg, exp, path, spec["required"], spec["required"] | spec["optional"] | {"kind"},
                f"{kind} experiment")
    if "model" in exp:
        validate_model(cfg, exp["model"], path + ("model",))
    if "path" in exp:
        _check_keys(cfg, exp["path"], path + ("path",), {"start", "end"}, PATH_KEYS, "path")
        validate_model(cfg, exp["path"]["start"], path + ("path", "start"))
        validate_model(cfg, exp["path"]["end"], path + ("path", "end"))
        if "gap_floor" in exp["path"]:
            _check_number(cfg, exp["path"]["gap_floor"], path + ("path", "gap_floor"), positive=True)
    if "filter" in exp:
        _check_keys(cfg, exp["filter"], path + ("filter",), set(), FILTER_KEYS, "filter")
    for key in ("t_max", "s", "v", "c1", "c2"):
        if key in exp:
            _check_number(cfg, exp[key], path + (key,), positive=key != "s")
    for key in ("points", "s_points", "haar_samples"):
        if key in exp and (not isinstance(exp[key], int) or isinstance(exp[key], bool) or exp[key] < 1):
            raise cfg.error(f"{key} must be a positive integer", path + (key,))
    if kind == "sweep":
        base = exp["base"]
        validate_experiment(cfg, base, path + ("base",), "quench")
        grid = exp["grid"]
        _check_keys(cfg, grid, path + ("grid",), set(), {"alpha", "N", "model"}, "grid")
        for key, values in grid.items():
            if not isinstance(values, list) or not values:
                raise cfg.error(f"grid.{key} must be a non-empty list", path + ("grid", key))
    return kind


def validate_config(cfg: Located, kind: str | None = None) -> list[dict]:
    """Return the experiments list (each with ``kind`` filled in)."""
    data = cfg.data
    if not isinstance(data, dict):
        raise cfg.error("config must be a mapping")
    if "experiments" not in data:
        if kind is None:
            raise cfg.error("config needs an 'experiments' list")
        single = {k: v for k, v in data.items() if k not in ("schema_version", "seed", "workers")}
        validate_experiment(cfg, single, (), kind)
        return [{**single, "kind": single.get("kind", kind)}]
    _check_keys(cfg, data, (), {"schema_version", "experiments"},
                {"schema_version", "seed", "workers", "experiments"}, "config")
    if data["schema_version"] != SCHEMA_VERSION:
        raise cfg.error(f"unsupported schema_version {data['schema_version']!r} (expected {SCHEMA_VERSION})",
                        ("schema_version",))
    if not isinstance(data["experiments"], list):
        raise cfg.error("experiments must be a list", ("experiments",))
    out = []
    for k, exp in enumerate(data["experiments"] or []):
        got = validate_experiment(cfg, exp, ("experiments", k), None if kind is None else kind)
        if kind is None or got == kind:
            out.append({**exp, "kind": got})
    return out
