"""Binary model container.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON header,
then the raw little-endian arrays back to back. The header lists every
array's group, layer, role, dtype and shape, and a SHA-256 of the payload.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import CostModel, ModelConfig, ModelError

MAGIC = b"XOPTLCM\x00"
FORMAT_VERSION = 1


class ModelFileError(ModelError):
    pass


class ModelVersionError(ModelFileError):
    pass


def model_bytes(model: CostModel) -> bytes:
    entries, chunks = [], []
    for g in model.groups():
        for k, (W, b) in enumerate(model.params[g]):
            for role, a in (("W", W), ("b", b)):
                a = np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))
                entries.append({"group": g, "layer": k, "role": role, "dtype": a.dtype.str, "shape": list(a.shape)})
                chunks.append(a.tobytes())
    payload = b"".join(chunks)
    header = {
        "version": FORMAT_VERSION,
        "config": model.config.to_json(),
        "engines": list(model.engines),
        "dims": model.dims,
        "signature": model.signature,
        "arrays": entries,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(hb)) + hb + payload


def save_model(model: CostModel, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def model_from_bytes(data: bytes) -> CostModel:
    if len(data) < 12 or data[:8] != MAGIC:
        raise ModelFileError("not a crossopt model file")
    (hlen,) = struct.unpack("<I", data[8:12])
    try:
        header = json.loads(data[12 : 12 + hlen].decode())
    except (UnicodeDecodeError, ValueError):
        raise ModelFileError("model header is corrupted") from None
    if not isinstance(header, dict):
        raise ModelFileError("model header is corrupted")
    if header.get("version") != FORMAT_VERSION:
        raise ModelVersionError(f"model file format version {header.get('version')!r} is not supported (expected {FORMAT_VERSION})")
    payload = data[12 + hlen :]
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise ModelFileError("model payload checksum mismatch")
    try:
        model = CostModel(ModelConfig.from_json(header["config"]), list(header["engines"]), dict(header["dims"]), header["signature"])
        off = 0
        for e in header["arrays"]:
            dt = np.dtype(e["dtype"])
            n = int(np.prod(e["shape"], dtype=np.int64)) * dt.itemsize
            a = np.frombuffer(payload, dtype=dt, count=n // dt.itemsize, offset=off).reshape(e["shape"]).astype(dt.newbyteorder("="))
            off += n
            layers = model.params.setdefault(e["group"], [])
            if e["role"] == "W":
                layers.append([a, None])
            else:
                layers[e["layer"]][1] = a
        if off != len(payload):
            raise ModelFileError("model payload length does not match the header")
        model.params = {g: [(W, b) for W, b in ls] for g, ls in model.params.items()}
        if sorted(model.params) != sorted(model.groups()):
            raise ModelFileError("model file is missing parameter groups")
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"model header is malformed: {exc}") from None
    return model


def load_model(path) -> CostModel:
    return model_from_bytes(Path(path).read_bytes())
