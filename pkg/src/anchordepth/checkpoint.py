"""Binary checkpoint format.

Little-endian throughout::

    magic      4 bytes  b"ADCK"
    version    uint32   (1)
    count      uint32   number of tensors
    count x:   uint16 name length, UTF-8 name, uint8 ndim, ndim x uint32 dims
    payload    every tensor's float64 values in C order, in header order

The anchor depths are stored as the tensor ``anchor_depths``.
"""
from __future__ import annotations

import struct

import numpy as np

from .anchor_pool import AnchorPool
from .depthio import atomic_write

MAGIC = b"ADCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(params: dict, anchors) -> bytes:
    tensors = dict(params)
    tensors["anchor_depths"] = np.asarray(anchors, dtype=np.float64)
    head = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    body = []
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(head + body)


def decode_checkpoint(data: bytes) -> tuple[dict, np.ndarray]:
    if data[:4] != MAGIC:
        raise CheckpointError("not an anchordepth checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 12
    shapes = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, off)
            name = data[off + 2:off + 2 + n].decode("utf-8")
            off += 2 + n
            (ndim,) = struct.unpack_from("<B", data, off)
            dims = struct.unpack_from(f"<{ndim}I", data, off + 1)
            off += 1 + 4 * ndim
            shapes.append((name, dims))
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint header") from exc
    tensors = {}
    for name, dims in shapes:
        size = int(np.prod(dims, dtype=np.int64))
        end = off + 8 * size
        if end > len(data):
            raise CheckpointError(f"truncated payload for {name}")
        tensors[name] = np.frombuffer(data[off:end], dtype="<f8").reshape(dims).astype(np.float64)
        off = end
    if off != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    anchors = tensors.pop("anchor_depths", None)
    if anchors is None or "anchor_emb" not in tensors:
        raise CheckpointError("checkpoint lacks anchor depths or embeddings")
    return tensors, anchors


def save_checkpoint(path, params: dict, pool: AnchorPool) -> None:
    atomic_write(path, encode_checkpoint(params, pool.anchors))


def load_checkpoint(path, dtype=np.float64) -> tuple[dict, AnchorPool]:
    with open(path, "rb") as f:
        params, anchors = decode_checkpoint(f.read())
    params = {k: v.astype(dtype) for k, v in params.items()}
    return params, AnchorPool(anchors, params["anchor_emb"])
