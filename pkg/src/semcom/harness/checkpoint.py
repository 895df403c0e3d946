"""Checkpoint files.

Layout: the ASCII line ``SEMCOMCKPT v1``, one line of JSON manifest, then
the tensors as contiguous little-endian float32 blobs at the manifest's
offsets (relative to the end of the manifest line).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig
from ..models import SemanticSystem

MAGIC = "SEMCOMCKPT"
VERSION = "v1"


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    variant: str
    config: dict                       # TrainConfig.to_dict()
    tensors: dict = field(default_factory=dict)   # name -> float32 ndarray
    version: str = VERSION

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.config)


def _model_tensors(model: SemanticSystem) -> dict:
    out = {name: p.data for name, p in model.parameters().items()}
    for name, st in model.running_stats().items():
        out[f"{name}.running_mean"] = st.mean
        out[f"{name}.running_var"] = st.var
    return out


def from_model(model: SemanticSystem, cfg: TrainConfig) -> ModelCheckpoint:
    tensors = {k: np.array(v, dtype=np.float32) for k, v in _model_tensors(model).items()}
    return ModelCheckpoint(model.variant, cfg.to_dict(), tensors)


def build_model(ckpt: ModelCheckpoint) -> SemanticSystem:
    """Instantiate the variant from the stored config and copy the tensors in, checking shapes."""
    cfg = ckpt.train_config()
    model = SemanticSystem(cfg.link, ckpt.variant, cfg.seed, cfg.snr_range_db)
    want = _model_tensors(model)
    missing = sorted(set(want) - set(ckpt.tensors))
    extra = sorted(set(ckpt.tensors) - set(want))
    if missing or extra:
        raise CheckpointError(f"checkpoint tensors do not match the config: missing {missing[:5]}, "
                              f"unexpected {extra[:5]}")
    for name, dst in want.items():
        src = ckpt.tensors[name]
        if src.shape != dst.shape:
            raise CheckpointError(f"tensor {name}: checkpoint shape {src.shape}, config expects {dst.shape}")
        dst[...] = src
    return model


def checkpoint_save(ckpt: ModelCheckpoint, path) -> None:
    entries, offset = [], 0
    blobs = []
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name], dtype="<f4")      # keeps 0-d shapes; tobytes is C order
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {"version": ckpt.version, "variant": ckpt.variant, "config": ckpt.config,
                "tensors": entries, "total_bytes": offset}
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} {ckpt.version}\n".encode("ascii"))
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8") + b"\n")
        for b in blobs:
            fh.write(b)


def checkpoint_load(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        manifest_line = fh.readline()
        payload = fh.read()
    parts = header.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {header[:32]!r}, expected '{MAGIC} {VERSION}'")
    if parts[1] != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {parts[1]!r} (reader is {VERSION})")
    try:
        manifest = json.loads(manifest_line)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable manifest: {exc}") from None
    if manifest.get("total_bytes") != len(payload):
        raise CheckpointError(f"{path}: manifest declares {manifest.get('total_bytes')} blob bytes, "
                              f"file holds {len(payload)}")
    tensors = {}
    for e in manifest["tensors"]:
        shape = tuple(e["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 4
        if n != e["nbytes"] or e["offset"] + n > len(payload):
            raise CheckpointError(f"{path}: tensor {e['name']} overruns the blob section")
        tensors[e["name"]] = np.frombuffer(payload, dtype="<f4", count=n // 4,
                                           offset=e["offset"]).reshape(shape).astype(np.float32)
    return ModelCheckpoint(manifest["variant"], manifest["config"], tensors, parts[1])
