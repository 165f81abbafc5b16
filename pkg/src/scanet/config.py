"""Layered run configuration: built-in defaults <- JSON config file <-
command-line overrides. Every key is dot-addressable from the CLI
(`--error-model.p 1,0,0,0`); dashes in CLI keys map to underscores. The
fully resolved config is written next to every output artifact.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

from .errors import ConfigError

ENV_SEED = "SCANET_SEED"


def defaults() -> dict:
    return {
        "seed": int(os.environ.get(ENV_SEED, "0")),
        "world_dims": [16, 16, 12],
        "image_size": 128,
        "component_box": [8, 8, 4],
        "gen": {
            "manuals": 8,
            "steps_range": [6, 10],
            "components_per_step": [2, 5],
            "draws_per_step": [3, 5],
            "shape_library": "default",
            "render_images": True,
            "max_place_retries": 200,
        },
        "error_model": {"p": [0.35, 0.35, 0.05, 0.25], "max_offset": 3},
        "model": {
            "c1": 128,
            "hourglass_depth": 3,
            "with_assembly_branch": True,
            "with_image_encoder": True,
            "with_pose_encoder": True,
            "encoder_layers": 3,
            "decoder_layers": 3,
            "heads": 8,
            "ffn_dim": 512,
            "replace": "selective",
        },
        "train": {
            "lr": 1e-4,
            "batch_size": 8,
            "grad_accumulation": 4,
            "epochs": 100,
            "weight_decay": 1e-4,
            "checkpoint_every": 1,
            "max_iterations": 0,
        },
        "loss": {"alpha": 1.0, "beta": 1.0, "gamma": 0.5},
    }


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override_value(text: str):
    """Interpret a CLI override value: JSON first, then a comma list of
    numbers, then a bare scalar."""
    try:
        return json.loads(text)
    except (json.JSONDecodeError, ValueError):
        pass
    if "," in text:
        return [parse_override_value(part) for part in text.split(",")]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def apply_override(cfg: dict, dotted_key: str, value) -> None:
    keys = [part.replace("-", "_") for part in dotted_key.split(".")]
    node = cfg
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"unknown config section '{key}' in '{dotted_key}'")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key '{dotted_key}'")
    node[keys[-1]] = value


def resolve(config_file=None, overrides: dict | None = None) -> dict:
    """Build the resolved config from defaults, an optional JSON file, and
    dotted-key overrides, then validate."""
    cfg = defaults()
    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        cfg = _deep_merge(cfg, file_cfg)
    for key, value in (overrides or {}).items():
        apply_override(cfg, key, value)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    size = cfg["image_size"]
    if size % 16 != 0 or size < 16:
        raise ConfigError(f"image_size must be a positive multiple of 16, got {size}")
    if len(cfg["world_dims"]) != 3 or min(cfg["world_dims"]) < 2:
        raise ConfigError(f"world_dims must be 3 values each >= 2, got {cfg['world_dims']}")
    if len(cfg["component_box"]) != 3 or min(cfg["component_box"]) < 1:
        raise ConfigError(f"component_box must be 3 positive values, got {cfg['component_box']}")
    p = cfg["error_model"]["p"]
    if len(p) != 4 or any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
        raise ConfigError(f"error_model.p must be 4 nonnegative values summing to 1, got {p}")
    if cfg["error_model"]["max_offset"] < 1:
        raise ConfigError("error_model.max_offset must be >= 1")
    model = cfg["model"]
    if model["c1"] < 8 or model["c1"] % 8 != 0:
        raise ConfigError(f"model.c1 must be a positive multiple of 8, got {model['c1']}")
    if model["decoder_layers"] < 1:
        raise ConfigError("model.decoder_layers must be >= 1")
    if 2 * model["c1"] % model["heads"] != 0:
        raise ConfigError("attention heads must divide the model width (2*c1)")
    if model["replace"] not in ("selective", "full"):
        raise ConfigError(f"model.replace must be 'selective' or 'full', got {model['replace']}")
    if not model["with_pose_encoder"] and model["with_image_encoder"]:
        raise ConfigError(
            "removing the 6D pose encoder is only defined together with the "
            "image encoder (the combined ablation); set with_image_encoder false too"
        )
    train = cfg["train"]
    for key in ("lr", "batch_size", "grad_accumulation", "epochs"):
        if train[key] <= 0:
            raise ConfigError(f"train.{key} must be positive")
    for key in ("alpha", "beta", "gamma"):
        if cfg["loss"][key] < 0:
            raise ConfigError(f"loss.{key} must be >= 0")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def arch_hash(cfg: dict) -> str:
    """Hash of the architecture-determining subset; eval compares this
    between a checkpoint and a dataset."""
    subset = {
        "world_dims": cfg["world_dims"],
        "image_size": cfg["image_size"],
        "component_box": cfg["component_box"],
        "model": cfg["model"],
    }
    return config_hash(subset)


def write_resolved(cfg: dict, out_dir) -> None:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.resolved.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
