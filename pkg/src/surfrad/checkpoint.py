"""Checkpoint bundles: a JSON manifest plus a raw little-endian tensor payload.

File layout::

    8 bytes   magic "SURFRAD" + format byte
    8 bytes   manifest length, little-endian uint64
    ...       manifest JSON (utf-8, canonical key order)
    ...       tensor payload, each tensor's bytes concatenated in the order
              the manifest's tensor table declares them

The manifest carries everything non-tensor: the full run config and its
hash, the step counter, both RNG states that fit in JSON, optimizer
hyperparameters and the loss running averages.  Tensors (model weights,
Adam moments, the torch sampler state) live in the payload.  Writing is
deterministic given the same state and ``created`` stamp, so a
load/save round trip reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import os
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, config_hash, run_config_from_dict, run_config_to_dict
from .fields import JointField
from .training import TrainState

__all__ = [
    "CheckpointError",
    "write_bundle",
    "read_bundle",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = b"SURFRAD\x01"
SCHEMA_VERSION = 1

# numpy dtype name -> explicit little-endian spec for the payload
_DTYPES = {
    "float32": "<f4",
    "float64": "<f8",
    "int64": "<i8",
    "int32": "<i4",
    "uint8": "|u1",
    "bool": "|b1",
}


class CheckpointError(ValueError):
    """A bundle file is malformed or inconsistent with its manifest."""


def write_bundle(path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write ``tensors`` (name -> array, order preserved) under ``manifest``."""
    if "tensors" in manifest or "schema_version" in manifest:
        raise ValueError("manifest keys 'tensors' and 'schema_version' are reserved")
    table = []
    chunks = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype.name not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor '{name}'")
        table.append({"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape)})
        chunks.append(np.ascontiguousarray(arr.astype(_DTYPES[arr.dtype.name], copy=False)).tobytes())
    doc = {"schema_version": SCHEMA_VERSION, **manifest, "tensors": table}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)
    os.replace(tmp, path)


def read_bundle(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of :func:`write_bundle`; validates payload length against the
    declared tensor table before slicing anything."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint bundle")
    (mlen,) = struct.unpack("<Q", data[8:16])
    if 16 + mlen > len(data):
        raise CheckpointError(f"{path} is truncated (manifest length {mlen})")
    doc = json.loads(data[16:16 + mlen].decode("utf-8"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"unsupported checkpoint schema {doc.get('schema_version')!r}")
    payload = data[16 + mlen:]
    expected = sum(
        int(np.prod(entry["shape"], dtype=np.int64)) * np.dtype(_DTYPES[entry["dtype"]]).itemsize
        for entry in doc["tensors"]
    )
    if expected != len(payload):
        raise CheckpointError(
            f"payload is {len(payload)} bytes but the manifest declares {expected}"
        )
    tensors = {}
    offset = 0
    for entry in doc["tensors"]:
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        flat = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
        tensors[entry["name"]] = flat.reshape(entry["shape"]).copy()
        offset += count * dtype.itemsize
    return doc, tensors


# -- train-state round trip ------------------------------------------------


def save_checkpoint(path, state: TrainState, run_config: RunConfig,
                    created: str | None = None) -> None:
    """Serialize a full training state (model, optimizer, RNGs, counters)."""
    tensors: dict[str, np.ndarray] = {}
    for name, value in state.model.state_dict().items():
        tensors[f"model.{name}"] = value.detach().cpu().numpy()
    osd = state.optimizer.state_dict()
    scalars = {}
    for idx in sorted(osd["state"]):
        for key in sorted(osd["state"][idx]):
            value = osd["state"][idx][key]
            if torch.is_tensor(value):
                tensors[f"optim.{idx}.{key}"] = value.detach().cpu().numpy()
            else:
                scalars[f"{idx}.{key}"] = value
    tensors["torch_sampler"] = state.sampler.get_state().numpy()
    manifest = {
        "kind": "train_state",
        "created": created or datetime.now(timezone.utc).isoformat(),
        "step": state.step,
        "config": run_config_to_dict(run_config),
        "config_hash": config_hash(run_config),
        "numpy_rng": state.rng.bit_generator.state,
        "loss_avg": state.loss_avg,
        "optimizer_groups": osd["param_groups"],
        "optimizer_scalars": scalars,
    }
    write_bundle(path, manifest, tensors)


def load_checkpoint(path) -> tuple[TrainState, dict]:
    """Rebuild a :class:`TrainState` from a bundle; returns it with the
    manifest so callers can read the stored config and metadata."""
    doc, tensors = read_bundle(path)
    if doc.get("kind") != "train_state":
        raise CheckpointError(f"bundle kind {doc.get('kind')!r} is not a train state")
    run_cfg = run_config_from_dict(doc["config"])
    model = JointField(run_cfg.model, seed=run_cfg.seed)
    model_state = {
        name[len("model."):]: torch.from_numpy(arr)
        for name, arr in tensors.items() if name.startswith("model.")
    }
    model.load_state_dict(model_state, strict=True)

    groups = doc["optimizer_groups"]
    for group in groups:  # JSON round trip turns the betas tuple into a list
        if isinstance(group.get("betas"), list):
            group["betas"] = tuple(group["betas"])
    optimizer = torch.optim.Adam(model.parameters(), lr=groups[0]["lr"])
    optim_state: dict[int, dict] = {}
    for name, arr in tensors.items():
        if not name.startswith("optim."):
            continue
        _, idx, key = name.split(".", 2)
        optim_state.setdefault(int(idx), {})[key] = torch.from_numpy(arr)
    for compound, value in doc.get("optimizer_scalars", {}).items():
        idx, key = compound.split(".", 1)
        optim_state.setdefault(int(idx), {})[key] = value
    optimizer.load_state_dict({"state": optim_state, "param_groups": groups})

    rng = np.random.default_rng()
    rng.bit_generator.state = doc["numpy_rng"]
    sampler = torch.Generator()
    sampler.set_state(torch.from_numpy(tensors["torch_sampler"].copy()))
    state = TrainState(model, optimizer, int(doc["step"]), rng, sampler,
                       dict(doc["loss_avg"]))
    return state, doc
