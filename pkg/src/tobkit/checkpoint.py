"""Model checkpoint container.

Self-describing binary layout, little-endian:

    0       4   magic "NNCK"
    4       2   version (u16, currently 1)
    6       4   header length L (u32)
    10      L   UTF-8 JSON header:
                {"layers": [...layer specs...],
                 "params": [{"name", "shape", "trainable"}, ...],
                 "meta": {...}}
    10+L    -   parameter payload: float64 values in header order,
                row-major, concatenated

Round-trip preserves parameter values bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn import Network, build_layer

MAGIC = b"NNCK"
VERSION = 1
_HEAD = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


def save_network(path: str | Path, network: Network, meta: dict | None = None) -> None:
    params = network.params()
    header = {
        "layers": network.layer_specs(),
        "params": [
            {"name": p.name, "shape": list(p.value.shape), "trainable": p.trainable}
            for p in params
        ],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_network(path: str | Path) -> tuple[Network, dict]:
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise CheckpointError("truncated checkpoint")
        magic, version, blob_len = _HEAD.unpack(head)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"unsupported version {version}")
        blob = fh.read(blob_len)
        if len(blob) < blob_len:
            raise CheckpointError("truncated checkpoint header")
        header = json.loads(blob.decode("utf-8"))
        layers = [
            build_layer(spec, name=f"layer{i}") for i, spec in enumerate(header["layers"])
        ]
        network = Network(layers)
        params = network.params()
        if len(params) != len(header["params"]):
            raise CheckpointError("parameter list does not match layer specs")
        for p, entry in zip(params, header["params"]):
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) < 8 * count:
                raise CheckpointError(f"truncated payload at {entry['name']}")
            p.name = entry["name"]
            p.value = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            p.trainable = bool(entry["trainable"])
    return network, header.get("meta", {})
