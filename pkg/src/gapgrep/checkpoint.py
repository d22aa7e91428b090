"""Checkpoint archive: named float64 payloads plus a metadata record.

A checkpoint is a zip file holding one raw little-endian float64 entry per
parameter under params/<name>, and a manifest.json with shapes and run
metadata (config hash, seed, step count, anything else the caller records).
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from pathlib import Path

import numpy as np

from .autodiff import Tensor

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_checkpoint(path: str | Path, params: dict[str, Tensor | np.ndarray], metadata: dict | None = None) -> None:
    manifest = {
        "format": FORMAT_VERSION,
        "metadata": metadata or {},
        "params": {},
    }
    arrays: dict[str, np.ndarray] = {}
    for name, p in params.items():
        arr = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        arrays[name] = arr
        manifest["params"][name] = list(arr.shape)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, sort_keys=True, indent=1))
        for name, arr in arrays.items():
            zf.writestr(f"params/{name}", arr.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with zipfile.ZipFile(path, "r") as zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise CheckpointError(f"{path}: missing manifest.json") from None
        if manifest.get("format") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
        params = {}
        for name, shape in manifest["params"].items():
            raw = zf.read(f"params/{name}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return params, manifest.get("metadata", {})


def restore_into(params: dict[str, Tensor], values: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into an existing parameter set, strictly by name."""
    missing = sorted(set(params) - set(values))
    extra = sorted(set(values) - set(params))
    if missing or extra:
        raise CheckpointError(f"parameter names do not match checkpoint (missing={missing}, extra={extra})")
    for name, p in params.items():
        if p.data.shape != values[name].shape:
            raise CheckpointError(f"shape mismatch for {name!r}: {p.data.shape} vs {values[name].shape}")
        p.data[...] = values[name]
