"""Versioned binary checkpoint container.

Byte layout (all integers little-endian):

    bytes 0-3   magic ``CCKP``
    bytes 4-7   uint32 format version (currently 1)
    bytes 8-11  uint32 header length N
    bytes 12-   N bytes of UTF-8 JSON header
    then        tensor payload, concatenated in header order

The JSON header carries ``kind`` (model family), ``config`` (architecture
dict), ``vocab_sha256``, free-form ``meta``, and ``tensors``: a list of
``{name, shape, offset, nbytes}`` entries.  Every tensor is stored as
row-major 64-bit IEEE floats at its offset into the payload, so the file
is readable from any language without this module.  JSON keys are sorted
and separators fixed, making byte-identical weights produce
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

MAGIC = b"CCKP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


def save_checkpoint(
    path: str | Path,
    tensors: Mapping[str, torch.Tensor],
    kind: str,
    config: Mapping[str, Any],
    vocab_sha256: str | None = None,
    meta: Mapping[str, Any] | None = None,
) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, tensor in tensors.items():
        blob = tensor.detach().to(torch.float64).contiguous().numpy().astype("<f8").tobytes()
        entries.append(
            {"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "kind": kind,
        "config": dict(config),
        "vocab_sha256": vocab_sha256,
        "meta": dict(meta or {}),
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict[str, Any]]:
    """Read tensors and the header; returns ({name: float64 tensor}, header)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    payload = raw[12 + header_len :]
    tensors = {}
    for entry in header["tensors"]:
        blob = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        array = np.frombuffer(blob, dtype="<f8").reshape(entry["shape"]).copy()
        tensors[entry["name"]] = torch.from_numpy(array)
    return tensors, header


def require_vocab(header: Mapping[str, Any], vocab_sha256: str) -> None:
    """Reject checkpoints trained against a different vocabulary."""
    stored = header.get("vocab_sha256")
    if stored is not None and stored != vocab_sha256:
        raise CheckpointError(
            f"vocabulary hash mismatch: checkpoint has {stored[:12]}..., "
            f"current vocabulary is {vocab_sha256[:12]}..."
        )
