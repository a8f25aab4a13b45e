"""Versioned binary checkpoints.

Layout::

    magic      8 bytes  b"SPDTCKPT"
    version    uint32 little-endian
    hdr_len    uint64 little-endian
    header     hdr_len bytes of UTF-8 JSON:
               {"config": {...}, "params": [{"name", "shape", "offset"}, ...]}
    payload    little-endian float64 values; ``offset`` counts values, not bytes
"""
import json
import struct

import numpy as np

from spectradet.unidet.model import ModelConfig, ToyModel

MAGIC = b"SPDTCKPT"
VERSION = 1


class CheckpointError(IOError):
    pass


def save_checkpoint(path, model, extra=None):
    manifest, offset = [], 0
    for name, prm in model.named_parameters():
        manifest.append({"name": name, "shape": list(prm.shape), "offset": offset})
        offset += prm.size
    header = json.dumps({"config": model.config.as_dict(), "params": manifest,
                         "extra": extra or {}}, sort_keys=True).encode("utf-8")
    payload = np.concatenate([p.data.reshape(-1) for p in model.parameters()]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        fh.write(payload.tobytes())


def load_checkpoint(path):
    """Return ``(model, extra)``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hdr_len = struct.unpack_from("<IQ", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(buf[start:start + hdr_len].decode("utf-8"))
    payload = np.frombuffer(buf, dtype="<f8", offset=start + hdr_len)
    model = ToyModel.init(ModelConfig(**header["config"]))
    state = {}
    for entry in header["params"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = payload[entry["offset"]:entry["offset"] + n]
        if chunk.size != n:
            raise CheckpointError(f"{path}: payload truncated at {entry['name']}")
        state[entry["name"]] = chunk.reshape(entry["shape"]).astype(np.float64)
    model.load_state(state)
    return model, header.get("extra", {})
