"""Config loading, schema validation, and override plumbing.

A config is one JSON object validated against the schema shipped next
to this module (``schema.json``). Every field is optional and falls
back to the named preset. ``--set dotted.path=value`` overrides apply
to the raw document before validation, so an override can never smuggle
in an invalid value.
"""

from __future__ import annotations

import dataclasses
import json
from functools import lru_cache
from pathlib import Path

import jsonschema

from ..errors import SchemaError
from ..experiments import SuitePreset, get_preset

SCHEMA_PATH = Path(__file__).with_name("schema.json")


@lru_cache(maxsize=1)
def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def validate_config(raw: dict) -> None:
    """Schema-check a raw config dict; the error names the offending key."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = e.json_path if e.json_path != "$" else "$ (top level)"
        raise SchemaError(f"config invalid at {where}: {e.message}")


def parse_override(text: str) -> tuple[list[str], object]:
    """'a.b.c=value' -> (['a','b','c'], parsed value). Values parse as JSON,
    falling back to a bare string."""
    if "=" not in text:
        raise SchemaError(f"override {text!r} is not of the form path=value")
    path, _, value = text.partition("=")
    path = path.strip()
    if not path:
        raise SchemaError(f"override {text!r} has an empty path")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return path.split("."), parsed


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    out = json.loads(json.dumps(raw))  # deep copy via the same codec the file used
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            elif not isinstance(nxt, dict):
                raise SchemaError(f"override path {'.'.join(path)!r} descends into non-object {part!r}")
            node = nxt
        node[path[-1]] = value
    return out


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict:
    """Read, override, and validate a config document. No path -> empty config."""
    if path is None:
        raw = {}
    else:
        path = Path(path)
        if not path.exists():
            raise SchemaError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise SchemaError(f"{path}: config must be a JSON object, got {type(raw).__name__}")
    if overrides:
        raw = apply_overrides(raw, overrides)
    validate_config(raw)
    return raw


def resolve_preset(config: dict) -> SuitePreset:
    """Named preset with training-semantics overrides applied.

    Only fields that change what a training run computes are folded into
    the preset (and so into the config fingerprint). Selection fields
    like seeds or the sparsity grid stay command arguments, so runs over
    different selections share one fingerprint and dedupe.
    """
    preset = get_preset(config.get("preset", "toy"))
    po = config.get("preset_overrides")
    if po:
        preset = dataclasses.replace(preset, **po)
    if "eval_batch" in config:
        preset = dataclasses.replace(preset, eval_batch=int(config["eval_batch"]))
    return preset
