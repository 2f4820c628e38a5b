"""Experiment configuration: published JSON schemas, validation, hashing.

Every run record embeds the resolved config and its hash; identical configs
hash identically regardless of key order.
"""

from __future__ import annotations

import hashlib
import json

import jsonschema

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def _num_list(minimum=None):
    item = {"type": "number"}
    if minimum is not None:
        item["minimum"] = minimum
    return {"type": "array", "items": item, "minItems": 1}


_COMMON = {
    "seed": {"type": "integer", "minimum": 0},
    "replicas": {"type": "integer", "minimum": 1},
}

CONFIG_SCHEMAS = {
    "survival": {
        "type": "object",
        "properties": {
            "d": {"type": "integer", "minimum": 3},
            "N": {"type": "integer", "minimum": 2},
            "u_grid": _num_list(0),
            **_COMMON,
        },
        "required": ["d", "N", "u_grid", "replicas", "seed"],
        "additionalProperties": False,
    },
    "scan-u": {
        "type": "object",
        "properties": {
            "d": {"type": "integer", "minimum": 3},
            "N": {"type": "integer", "minimum": 2},
            "u_grid": _num_list(0),
            "K": {"type": "number", "exclusiveMinimum": 0},
            "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "component_threshold": {"type": "number", "exclusiveMinimum": 0},
            **_COMMON,
        },
        "required": ["d", "N", "u_grid", "K", "beta", "replicas", "seed"],
        "additionalProperties": False,
    },
    "segments": {
        "type": "object",
        "properties": {
            "d": {"type": "integer", "minimum": 3},
            "N_list": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
            "u_grid": _num_list(0),
            "K_grid": _num_list(0),
            "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            **_COMMON,
        },
        "required": ["d", "N_list", "u_grid", "K_grid", "beta", "replicas", "seed"],
        "additionalProperties": False,
    },
    "largest-ball": {
        "type": "object",
        "properties": {
            "d": {"type": "integer", "minimum": 3},
            "N_list": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
            "u": {"type": "number", "exclusiveMinimum": 0},
            **_COMMON,
        },
        "required": ["d", "N_list", "u", "replicas", "seed"],
        "additionalProperties": False,
    },
    "excursions": {
        "type": "object",
        "properties": {
            "d": {"type": "integer", "minimum": 3},
            "N": {"type": "integer", "minimum": 2},
            "u_checkpoints": _num_list(0),
            "probes": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "L": {"type": "integer", "minimum": 1},
                        "r": {"type": "integer", "minimum": 1},
                    },
                    "required": ["L", "r"],
                    "additionalProperties": False,
                },
            },
            **_COMMON,
        },
        "required": ["d", "N", "u_checkpoints", "replicas", "seed"],
        "additionalProperties": False,
    },
    "coupling": {
        "type": "object",
        "properties": {
            "d": {"type": "integer", "minimum": 3},
            "L": {"type": "integer", "minimum": 1},
            "r_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "n_per_point": {"type": "integer", "minimum": 100},
            "n_q": {"type": "integer", "minimum": 100},
            "n_harmonic": {"type": "integer", "minimum": 1000},
            "seed": {"type": "integer", "minimum": 0},
        },
        "required": ["d", "L", "r_list", "n_per_point", "seed"],
        "additionalProperties": False,
    },
    "constants": {
        "type": "object",
        "properties": {
            "d_values": {"type": "array", "items": {"type": "integer", "minimum": 5}, "minItems": 1},
            "quad_tol": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["d_values"],
        "additionalProperties": False,
    },
    "qnu": {
        "type": "object",
        "properties": {
            "nu_values": {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1},
            "escape_radius": {"type": "integer", "minimum": 2},
            "n_samples": {"type": "integer", "minimum": 100},
            "seed": {"type": "integer", "minimum": 0},
        },
        "required": ["nu_values", "seed"],
        "additionalProperties": False,
    },
    "validate": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer", "minimum": 0},
            "n_grids": {"type": "integer", "minimum": 1},
            "grid_file": {"type": "string"},
        },
        "additionalProperties": False,
    },
}


def validate_config(command: str, config: dict) -> dict:
    if command not in CONFIG_SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        jsonschema.validate(config, CONFIG_SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config for {command}: {exc.message}") from exc
    return config


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
