"""Self-describing binary parameter checkpoints.

Layout (all integers little-endian):

    bytes  0..12   magic b"CONVEMO-CKPT\\n"
    u32            format version (currently 1)
    u32            metadata length, followed by that many bytes of UTF-8 JSON
                   holding {"d_x", "d_cs", "hidden", "num_classes",
                   "bidirectional"}
    u32            parameter count
    per parameter, in the fixed named_tensors() order:
        u16        name length, followed by the UTF-8 name
                   (e.g. "gru_c.input_weights", "classifier.bias";
                   bidirectional models add a "reverse."-prefixed set)
        u8         rank, then one u32 per dimension
        f64 x n    row-major payload

Writing the same parameters twice produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelDims, ModelParams, init_params

MAGIC = b"CONVEMO-CKPT\n"
VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is missing, corrupt, or inconsistent with its metadata."""


def save_params(params: ModelParams, path) -> None:
    dims = params.dims
    meta = json.dumps({
        "d_x": dims.d_x,
        "d_cs": dims.d_cs,
        "hidden": dims.hidden,
        "num_classes": dims.num_classes,
        "bidirectional": dims.bidirectional,
    }, sort_keys=True).encode("utf-8")
    named = params.named_tensors()

    chunks = [MAGIC, struct.pack("<I", VERSION),
              struct.pack("<I", len(meta)), meta,
              struct.pack("<I", len(named))]
    for name, tensor in named:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        shape = tensor.data.shape
        chunks.append(struct.pack("<B", len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape))
        chunks.append(tensor.data.astype("<f8").tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]


def load_params(path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    r = _Reader(path.read_bytes(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a parameter checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
        dims = ModelDims(d_x=int(meta["d_x"]), d_cs=int(meta["d_cs"]),
                         hidden=int(meta["hidden"]), num_classes=int(meta["num_classes"]),
                         bidirectional=bool(meta["bidirectional"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad metadata block ({exc})") from exc

    count = r.u32()
    loaded: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u8()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n = int(np.prod(shape))
        arr = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
        loaded[name] = arr
    if r.pos != len(r.blob):
        raise CheckpointError(f"{path}: trailing bytes after last parameter")

    params = init_params(dims, seed=0)
    expected = params.named_tensors()
    names = {name for name, _ in expected}
    if set(loaded) != names:
        missing = sorted(names - set(loaded))
        extra = sorted(set(loaded) - names)
        raise CheckpointError(f"{path}: parameter set mismatch (missing {missing}, extra {extra})")
    for name, tensor in expected:
        if loaded[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"{path}: {name} has shape {loaded[name].shape}, expected {tensor.data.shape}")
        tensor.data = np.ascontiguousarray(loaded[name])
    return params
