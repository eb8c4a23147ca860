"""Experiment configuration: YAML loading and schema validation.

Validation errors are reported with the line and column of the offending
node in the source file.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "load_schema", "canonical_json"]


class ConfigError(ValueError):
    """Unreadable or schema-violating configuration."""


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("polycap").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``data`` holds the parsed document; ``digest`` is the SHA-256 of its
    canonical JSON form after seed overrides, so equal digests mean equal
    runs.
    """

    data: dict
    source: str = "<string>"

    @property
    def experiment(self) -> str:
        return self.data["experiment"]

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def params(self) -> dict:
        return self.data.get("params", {})

    @property
    def items(self) -> list:
        return self.data["items"]

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.data).encode()).hexdigest()

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None:
            return self
        d = copy.deepcopy(self.data)
        d["seed"] = int(seed)
        return ExperimentConfig(d, self.source)


def _locate(node, path) -> tuple:
    """Line and column (1-based) of the YAML node at ``path``."""
    best = node
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = best = nxt
    mark = best.start_mark
    return mark.line + 1, mark.column + 1


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate a YAML document."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1:1: the document must be a mapping")
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        lines = []
        for err in errors[:5]:
            line, col = _locate(root, list(err.absolute_path))
            where = "/".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"{source}:{line}:{col}: {where}: {err.message}")
        raise ConfigError("\n".join(lines))
    _check_semantics(data, root, source)
    return ExperimentConfig(data, source)


def _check_semantics(data: dict, root, source: str) -> None:
    exp = data["experiment"]
    params = data.get("params", {})
    m, k = params.get("m", 1), params.get("k", 0)

    def fail(path, msg):
        line, col = _locate(root, path)
        raise ConfigError(f"{source}:{line}:{col}: {'/'.join(map(str, path))}: {msg}")

    if data["grid"]["n"] % 2 == 0:
        fail(["grid", "n"], "nodes per axis must be odd")
    if exp != "deviation" and k > m - 1:
        fail(["params", "k"], "k must satisfy k + 1 <= m")
    for i, item in enumerate(data["items"]):
        need = "points" if exp == "deviation" else "geometry"
        if need not in item:
            fail(["items", i], f"{exp} items need '{need}'")
    ids = [it["id"] for it in data["items"]]
    if len(set(ids)) != len(ids):
        fail(["items"], "item ids must be unique")
    if exp == "equivalence" and len(ids) < 3:
        fail(["items"], "an equivalence family needs at least three sets")


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(p))
