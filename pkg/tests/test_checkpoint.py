import struct

import numpy as np
import pytest

from anchordepth.anchor_pool import AnchorPool
from anchordepth.checkpoint import (MAGIC, CheckpointError, decode_checkpoint,
                                    encode_checkpoint, load_checkpoint, save_checkpoint)
from anchordepth.model import init_params


def fresh():
    rng = np.random.default_rng(5)
    pool = AnchorPool.create(rng=rng)
    return init_params(pool, rng), pool


def test_round_trip_is_exact(tmp_path):
    params, pool = fresh()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, pool)
    loaded, lpool = load_checkpoint(path)
    assert loaded.keys() == params.keys()
    for k in params:
        assert loaded[k].tobytes() == params[k].astype(np.float64).tobytes()
    np.testing.assert_array_equal(lpool.anchors, pool.anchors)
    assert lpool.embeddings is loaded["anchor_emb"]


def test_header_layout():
    data = encode_checkpoint({"anchor_emb": np.zeros((2, 3))}, [1.0, 2.0])
    assert data[:4] == MAGIC
    assert struct.unpack_from("<II", data, 4) == (1, 2)
    (n,) = struct.unpack_from("<H", data, 12)
    assert data[14:14 + n] == b"anchor_emb"
    assert data[14 + n] == 2
    assert struct.unpack_from("<II", data, 15 + n) == (2, 3)
    # 6 + 2 doubles of payload at the end
    assert len(data) - data.index(b"anchor_depths") - len(b"anchor_depths") - 5 == 8 * 8


def test_encoding_is_deterministic():
    params, pool = fresh()
    assert encode_checkpoint(params, pool.anchors) == encode_checkpoint(params, pool.anchors)


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "version"),
    (lambda b: b[:-8], "truncated"),
    (lambda b: b + b"\0", "trailing"),
    (lambda b: b[:20], "truncated"),
])
def test_corruption_is_reported(mutate, msg):
    params, pool = fresh()
    with pytest.raises(CheckpointError, match=msg):
        decode_checkpoint(mutate(encode_checkpoint(params, pool.anchors)))


def test_missing_embeddings_rejected():
    with pytest.raises(CheckpointError):
        decode_checkpoint(encode_checkpoint({"enc1.w": np.ones(2)}, [1.0]))


def test_float32_load(tmp_path):
    params, pool = fresh()
    save_checkpoint(tmp_path / "m", params, pool)
    loaded, _ = load_checkpoint(tmp_path / "m", dtype=np.float32)
    assert all(v.dtype == np.float32 for v in loaded.values())
