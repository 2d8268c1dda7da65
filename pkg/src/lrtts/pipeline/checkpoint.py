"""Checkpoint directories: parameter arrays + optimizer moments + meta JSON.

Arrays round-trip bit-for-bit (float64 .npz, no pickling).  Resuming against
a different configuration hash is refused unless forced.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

SCHEMA_VERSION = 1


def config_hash(config_dict: dict) -> str:
    """Stable SHA-256 over a JSON-serializable configuration dict."""
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    component: str
    stage: int
    step: int
    config_hash: str
    params: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] | None
    extra: dict


def save_checkpoint(path, component: str, stage: int, step: int,
                    params: dict[str, np.ndarray], cfg_hash: str,
                    optimizer: dict[str, np.ndarray] | None = None,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.savez(path / "params.npz", **params)
    if optimizer is not None:
        np.savez(path / "optimizer.npz", **optimizer)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "component": component,
        "stage": stage,
        "step": step,
        "config_hash": cfg_hash,
        "extra": extra or {},
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    return path


def load_checkpoint(path, expected_hash: str | None = None,
                    force: bool = False) -> Checkpoint:
    """Load a checkpoint directory.

    Raises:
        CheckpointError: missing files, or a config-hash mismatch without
            ``force``.
    """
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    meta = json.loads(meta_path.read_text())
    if expected_hash is not None and meta["config_hash"] != expected_hash and not force:
        raise CheckpointError(
            f"{path}: checkpoint config hash {meta['config_hash']} != current "
            f"{expected_hash}; pass force=True (--force) to override")
    with np.load(path / "params.npz") as data:
        params = {k: np.array(data[k]) for k in data.files}
    optimizer = None
    opt_path = path / "optimizer.npz"
    if opt_path.exists():
        with np.load(opt_path) as data:
            optimizer = {k: np.array(data[k]) for k in data.files}
    return Checkpoint(component=meta["component"], stage=meta["stage"],
                      step=meta["step"], config_hash=meta["config_hash"],
                      params=params, optimizer=optimizer, extra=meta["extra"])


def checkpoint_roundtrip(state: dict[str, np.ndarray], path) -> dict[str, np.ndarray]:
    """Save arrays then load them back; the result is bit-identical."""
    save_checkpoint(path, component="roundtrip", stage=0, step=0, params=state,
                    cfg_hash="roundtrip")
    return load_checkpoint(path).params
