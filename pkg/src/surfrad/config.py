"""Run configuration: one JSON document covering every knob of a run.

A run config nests the three hyperparameter dataclasses (model, loss,
render) under a schema-versioned top level together with the seed and the
optional data/output paths.  Loading is strict: unknown keys anywhere in
the document are an error, so a typo like ``"lr_pretain"`` fails loudly
instead of silently training with the default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .fields import ModelConfig
from .losses import LossConfig
from .rendering import RenderConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "run_config_to_dict",
    "run_config_from_dict",
    "load_run_config",
    "save_run_config",
    "config_hash",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A config document is malformed or inconsistent."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    data_dir: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")


_SECTIONS = {"model": ModelConfig, "loss": LossConfig, "render": RenderConfig}
_TOP_KEYS = {"schema_version", "seed", "data_dir", "out_dir", *_SECTIONS}


def _parse_section(raw, cls, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be an object")
    allowed = {f.name for f in dc_fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


def run_config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported config schema {version!r} (expected {SCHEMA_VERSION})"
        )
    sections = {
        name: _parse_section(raw.get(name, {}), cls, name)
        for name, cls in _SECTIONS.items()
    }
    for key in ("data_dir", "out_dir"):
        value = raw.get(key)
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"'{key}' must be a string or null")
    return RunConfig(
        seed=raw.get("seed", 0),
        data_dir=raw.get("data_dir"),
        out_dir=raw.get("out_dir"),
        **sections,
    )


def run_config_to_dict(cfg: RunConfig) -> dict:
    """Plain-JSON form; the exact inverse of :func:`run_config_from_dict`."""
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "model": dataclasses.asdict(cfg.model),
        "loss": dataclasses.asdict(cfg.loss),
        "render": dataclasses.asdict(cfg.render),
        "data_dir": cfg.data_dir,
        "out_dir": cfg.out_dir,
    }


def config_hash(cfg: RunConfig) -> str:
    """sha256 over the canonical JSON form, excluding the filesystem paths.

    Two runs with the same hash used the same seed and hyperparameters even
    if their datasets lived in different directories.
    """
    doc = run_config_to_dict(cfg)
    doc.pop("data_dir")
    doc.pop("out_dir")
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return run_config_from_dict(raw)


def save_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(
        json.dumps(run_config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
    )
