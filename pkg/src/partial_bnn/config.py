"""Experiment configuration: loading, strict validation, defaults, hashing.

Configs are YAML (JSON is valid input too, by extension or content). The
schema rejects unknown keys everywhere, so typos fail before any compute,
and every violation is reported with the dotted path of the offending
field. Defaults are filled in after validation; the manifest hash is the
SHA-256 of the canonical JSON (sorted keys, compact separators) of the
fully defaulted config, so formatting and key order never change it.
"""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema
import yaml


class ConfigError(ValueError):
    """Validation failure; `field` is the dotted path into the config."""

    def __init__(self, field: str, message: str):
        self.field = field or "<root>"
        super().__init__("config error at %s: %s" % (self.field, message))


_BATCH = {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]}
_K = {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "all"}]}

_MAP_PROPS = {
    "steps": {"type": "integer", "minimum": 0},
    "lr": {"type": "number", "exclusiveMinimum": 0},
    "batch_size": _BATCH,
    "val_check_every": {"type": "integer", "minimum": 1},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "architecture", "backend"],
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["sine_small", "sine_large", "csv"]},
                "seed": {"type": "integer", "minimum": 0},
                "noise_std": {"type": "number", "minimum": 0},
                "path": {"type": "string"},
                "target_columns": {
                    "type": "array",
                    "items": {"type": "string"},
                    "minItems": 1,
                },
                "normalize": {"type": "boolean"},
                "split": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["none", "standard", "gap"]},
                        "seed": {"type": "integer", "minimum": 0},
                        "test_fraction": {
                            "type": "number",
                            "exclusiveMinimum": 0,
                            "exclusiveMaximum": 1,
                        },
                        "val_fraction": {
                            "type": "number",
                            "minimum": 0,
                            "exclusiveMaximum": 1,
                        },
                        "feature_index": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "architecture": {
            "type": "object",
            "additionalProperties": False,
            "required": ["hidden"],
            "properties": {
                "hidden": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 1,
                },
                "activation": {"enum": ["relu", "leaky_relu", "tanh", "silu"]},
                "slope": {"type": "number"},
                "parameterization": {"enum": ["standard", "ntk"]},
            },
        },
        "prior": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mean": {"type": "number"},
                "variance": {"type": "number", "exclusiveMinimum": 0},
                "rescale": {"enum": ["none", "count_ratio"]},
            },
        },
        "likelihood": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "noise_var": {"type": "number", "exclusiveMinimum": 0},
                "learn_precision": {"type": "boolean"},
                "precision_prior": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        "temperature": {"type": "number", "minimum": 0},
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["all", "layers"]},
                "layers": {
                    "type": "array",
                    "items": {"type": "string"},
                    "minItems": 1,
                },
                "include_biases": {"type": "boolean"},
            },
        },
        "backend": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["map", "mfvi", "hmc", "laplace", "swag"]},
                "map": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": dict(_MAP_PROPS),
                },
                "mfvi": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "epochs": {"type": "integer", "minimum": 1},
                        "lr": {"type": "number", "exclusiveMinimum": 0},
                        "weight_decay": {"type": "number", "minimum": 0},
                        "batch_size": _BATCH,
                        "mc_samples": {"type": "integer", "minimum": 1},
                        "kl_anneal_epochs": {"type": "integer", "minimum": 0},
                        "mu_init_std": {"type": "number", "minimum": 0},
                        "rho_init_mean": {"type": "number"},
                        "rho_init_std": {"type": "number", "minimum": 0},
                        "val_check_every": {"type": "integer", "minimum": 1},
                        "val_samples": {"type": "integer", "minimum": 1},
                    },
                },
                "hmc": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "chains": {"type": "integer", "minimum": 1},
                        "warmup": {"type": "integer", "minimum": 0},
                        "samples": {"type": "integer", "minimum": 1},
                        "leapfrog_steps": {"type": "integer", "minimum": 1},
                        "step_size": {
                            "oneOf": [
                                {"type": "number", "exclusiveMinimum": 0},
                                {"type": "null"},
                            ]
                        },
                        "target_accept": {
                            "type": "number",
                            "exclusiveMinimum": 0,
                            "exclusiveMaximum": 1,
                        },
                        "adapt_step_size": {"type": "boolean"},
                        "divergence_threshold": {
                            "type": "number",
                            "exclusiveMinimum": 0,
                        },
                        "init_map_steps": {"type": "integer", "minimum": 0},
                        "init_map_lr": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "laplace": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "structure": {"enum": ["diag", "dense"]},
                        "prior_precision": {
                            "oneOf": [
                                {"type": "number", "exclusiveMinimum": 0},
                                {"type": "null"},
                            ]
                        },
                        "tune": {"type": "boolean"},
                        "map_steps": {"type": "integer", "minimum": 0},
                        "map_lr": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "swag": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "epochs": {"type": "integer", "minimum": 1},
                        "snapshots_per_epoch": {"type": "integer", "minimum": 1},
                        "rank": {"type": "integer", "minimum": 2},
                        "lr": {"type": "number", "exclusiveMinimum": 0},
                        "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                        "weight_decay": {"type": "number", "minimum": 0},
                        "batch_size": _BATCH,
                        "map_steps": {"type": "integer", "minimum": 0},
                        "map_lr": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "two_stage": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "map": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": dict(_MAP_PROPS),
                },
                "select": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["top_abs_map", "layers"]},
                        "k": _K,
                        "layers": {
                            "type": "array",
                            "items": {"type": "string"},
                            "minItems": 1,
                        },
                        "include_biases": {"type": "boolean"},
                    },
                },
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["ks"],
            "properties": {"ks": {"type": "array", "items": _K, "minItems": 1}},
        },
        "predictions": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 0},
                "grid_points": {"type": "integer", "minimum": 2},
                "grid_margin": {"type": "number", "minimum": 0},
            },
        },
        "seeds": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "dataset": {
        "seed": 0,
        "noise_std": 0.05,
        "normalize": False,
        "split": {
            "kind": "none",
            "seed": 0,
            "test_fraction": 0.1,
            "val_fraction": 0.1,
            "feature_index": 0,
        },
    },
    "architecture": {
        "activation": "relu",
        "slope": 0.01,
        "parameterization": "standard",
    },
    "prior": {"mean": 0.0, "variance": 1.0, "rescale": "none"},
    "likelihood": {
        "noise_var": 0.01,
        "learn_precision": False,
        "precision_prior": [3.0, 1.0],
    },
    "temperature": 1.0,
    "partition": {"kind": "all", "include_biases": True},
    "backend": {
        "map": {"steps": 2000, "lr": 1e-3, "batch_size": None, "val_check_every": 10},
        "mfvi": {
            "epochs": 2000,
            "lr": 1e-3,
            "weight_decay": 1e-4,
            "batch_size": None,
            "mc_samples": 1,
            "kl_anneal_epochs": 200,
            "mu_init_std": 0.1,
            "rho_init_mean": -3.0,
            "rho_init_std": 0.1,
            "val_check_every": 25,
            "val_samples": 8,
        },
        "hmc": {
            "chains": 4,
            "warmup": 500,
            "samples": 500,
            "leapfrog_steps": 32,
            "step_size": None,
            "target_accept": 0.8,
            "adapt_step_size": True,
            "divergence_threshold": 1000.0,
            "init_map_steps": 0,
            "init_map_lr": 1e-3,
        },
        "laplace": {
            "structure": "dense",
            "prior_precision": None,
            "tune": False,
            "map_steps": 2000,
            "map_lr": 1e-3,
        },
        "swag": {
            "epochs": 10,
            "snapshots_per_epoch": 4,
            "rank": 20,
            "lr": 1e-2,
            "momentum": 0.0,
            "weight_decay": 3e-4,
            "batch_size": None,
            "map_steps": 2000,
            "map_lr": 1e-3,
        },
    },
    "two_stage": {
        "map": {"steps": 2000, "lr": 1e-3, "batch_size": None, "val_check_every": 10},
        "select": {"kind": "top_abs_map", "k": "all", "include_biases": True},
    },
    "predictions": {"n_samples": 0, "grid_points": 201, "grid_margin": 1.0},
    "seeds": [0],
    "output_dir": "results",
}


def load_config(path: str) -> dict:
    """Parse, validate, and default-fill a config file."""
    with open(path) as fh:
        text = fh.read()
    try:
        if path.endswith(".json"):
            raw = json.loads(text)
        else:
            raw = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError("<root>", "unparseable config: %s" % exc)
    return validate_config(raw)


def validate_config(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(".".join(str(p) for p in err.absolute_path), err.message)
    cfg = _fill_defaults(raw)
    _cross_checks(cfg)
    return cfg


def _fill_defaults(raw: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    _deep_merge(cfg, raw)
    return cfg


def _deep_merge(base: dict, override: dict) -> None:
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], val)
        else:
            base[key] = copy.deepcopy(val)


def _cross_checks(cfg: dict) -> None:
    ds = cfg["dataset"]
    if ds["kind"] == "csv":
        if "path" not in ds:
            raise ConfigError("dataset.path", "required for csv datasets")
        if "target_columns" not in ds:
            raise ConfigError("dataset.target_columns", "required for csv datasets")
    part = cfg["partition"]
    if part["kind"] == "layers" and "layers" not in part:
        raise ConfigError("partition.layers", "required when partition.kind is 'layers'")
    sel = cfg["two_stage"]["select"]
    if sel.get("kind") == "layers" and "layers" not in sel:
        raise ConfigError(
            "two_stage.select.layers", "required when two_stage.select.kind is 'layers'"
        )
    if cfg["likelihood"]["learn_precision"] and cfg["backend"]["kind"] == "mfvi":
        raise ConfigError(
            "likelihood.learn_precision",
            "the variational backend needs a fixed noise_var",
        )


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON encoding of a (defaulted) config."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
