"""Versioned binary checkpoint container.

Fixed byte order: magic, format version, JSON header (layout descriptor,
counts, config hash, metadata), then the flat parameters and the latent
store as little-endian float64 blocks. Loading is all-or-nothing: a
truncated or inconsistent file raises without leaving partial state.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from gridshed.errors import CheckpointError
from gridshed.policy import PolicyParams, layout_size

logger = logging.getLogger(__name__)

MAGIC = b"GSHEDCKP"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: PolicyParams
    latents: dict[int, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    config_hash: str | None = None


def save_checkpoint(params: PolicyParams, latent_store, metadata: dict, path, config_hash: str | None = None):
    """Write a checkpoint; ``latent_store`` maps scenario id -> latent vector."""
    latents = dict(latent_store.items()) if latent_store else {}
    ids = sorted(latents)
    latent_dim = len(next(iter(latents.values()))) if latents else 0
    header = {
        "layout": [[name, list(shape)] for name, shape in params.layout],
        "n_params": params.size,
        "params_version": params.version,
        "config_hash": config_hash,
        "metadata": metadata or {},
        "latent_dim": latent_dim,
        "latent_scenario_ids": ids,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(np.ascontiguousarray(params.flat, dtype="<f8").tobytes())
        for sid in ids:
            vec = np.asarray(latents[sid], dtype="<f8")
            if vec.shape != (latent_dim,):
                raise CheckpointError(
                    f"latent for scenario {sid} has shape {vec.shape}, expected ({latent_dim},)"
                )
            fh.write(vec.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint: short read while loading {what}")
    return data


def load_checkpoint(path, expect_config_hash: str | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "format version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} unsupported (expected {FORMAT_VERSION})"
            )
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, header_len, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupted checkpoint header: {exc}") from exc

        layout = tuple((name, tuple(shape)) for name, shape in header["layout"])
        n_params = int(header["n_params"])
        if layout_size(layout) != n_params:
            raise CheckpointError(
                f"header inconsistency: layout requires {layout_size(layout)} parameters, "
                f"header says {n_params}"
            )
        flat = np.frombuffer(_read_exact(fh, 8 * n_params, "parameters"), dtype="<f8").copy()

        latent_dim = int(header["latent_dim"])
        latents = {}
        for sid in header["latent_scenario_ids"]:
            raw = _read_exact(fh, 8 * latent_dim, f"latent for scenario {sid}")
            latents[int(sid)] = np.frombuffer(raw, dtype="<f8").copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("corrupted checkpoint: trailing bytes after latent block")

    config_hash = header.get("config_hash")
    if expect_config_hash is not None and config_hash is not None and config_hash != expect_config_hash:
        logger.warning(
            "checkpoint config hash %s does not match current config hash %s",
            config_hash, expect_config_hash,
        )
    params = PolicyParams(flat=flat, layout=layout, version=int(header["params_version"]))
    return Checkpoint(
        params=params,
        latents=latents,
        metadata=header.get("metadata", {}),
        config_hash=config_hash,
    )


def ensure_layout_compatible(checkpoint: Checkpoint, expected_layout):
    expected = tuple((name, tuple(shape)) for name, shape in expected_layout)
    if checkpoint.params.layout != expected:
        raise CheckpointError(
            "checkpoint layout is incompatible with the configured policy: "
            f"checkpoint has {checkpoint.params.layout}, expected {expected}"
        )
