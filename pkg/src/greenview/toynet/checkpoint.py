"""Versioned binary checkpoints.

Layout: 4-byte magic, uint32 format version, uint32 header length, a
UTF-8 JSON header (sorted keys), then the parameter vector as
little-endian float64 in layout order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import NetworkConfig, ParameterSet

MAGIC = b"GVCK"
FORMAT_VERSION = 1
NORMALIZATION = "rgb/255"


def dumps(params: ParameterSet, epoch: int, extra: dict | None = None) -> bytes:
    header = {
        "network": params.config.to_dict(),
        "epoch": int(epoch),
        "normalization": NORMALIZATION,
        "param_count": params.size,
        "layout": [[n, list(s)] for n, s in params.layout],
    }
    if extra:
        header.update(extra)
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = params.vector.astype("<f8").tobytes()
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(hb)) + hb + body


def loads(blob: bytes) -> tuple[ParameterSet, dict]:
    if blob[:4] != MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    config = NetworkConfig(**header["network"])
    vec = np.frombuffer(blob[12 + hlen:], dtype="<f8").astype(np.float64)
    if vec.size != header["param_count"]:
        raise DataError("checkpoint parameter count does not match its header")
    return ParameterSet(config, vec), header


def save_checkpoint(path, params: ParameterSet, epoch: int, extra: dict | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps(params, epoch, extra))


def load_checkpoint(path) -> tuple[ParameterSet, dict]:
    return loads(Path(path).read_bytes())
