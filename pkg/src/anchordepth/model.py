"""Desk-scale anchor-conditioned depth network.

One convolutional encoder (three stride-2 stages) feeds two decoder branches,
one predicting the scaled near-field depth and one the tapered far-field
depth.  Every decoder stage is modulated by the drawn anchor's embedding
(per-channel scale and shift), and a linear mask head reads the near branch's
last feature map.  Hidden layers use the smooth SiLU activation; gradients are computed by hand.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .anchor_pool import AnchorPool

ENCODER_WIDTHS = (16, 32, 64)
DECODER_WIDTHS = (32, 16, 16)
BRANCHES = ("near", "far")


@dataclass
class ModelOutput:
    near: np.ndarray
    far: np.ndarray
    mask_prob: np.ndarray | None
    near_logits: np.ndarray
    far_logits: np.ndarray
    mask_logits: np.ndarray | None


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_params(pool: AnchorPool, rng: np.random.Generator, in_channels: int = 3,
                mask_head: bool = True, film_std: float | None = None,
                encoder_widths=ENCODER_WIDTHS, decoder_widths=DECODER_WIDTHS) -> dict:
    """Fresh parameter dict.  ``anchor_emb`` is the pool's embedding table itself.

    ``film_std`` sets the init scale of the conditioning projections; 0 makes
    them identity modulations.  Defaults to ``1/sqrt(D)``.
    """
    d = pool.dim
    film_std = 1.0 / np.sqrt(d) if film_std is None else film_std
    p = {}
    cin = in_channels
    for i, c in enumerate(encoder_widths, 1):
        p[f"enc{i}.w"] = _he(rng, (3, 3, cin, c), 9 * cin)
        p[f"enc{i}.b"] = np.zeros(c)
        cin = c
    skips = (encoder_widths[1], encoder_widths[0], in_channels)
    for br in BRANCHES:
        cin = encoder_widths[2]
        for stage, (c, skip) in zip((3, 2, 1), zip(decoder_widths, skips)):
            pre = f"{br}.dec{stage}"
            p[f"{pre}.w"] = _he(rng, (3, 3, cin + skip, c), 9 * (cin + skip))
            p[f"{pre}.b"] = np.zeros(c)
            p[f"{pre}.film_wg"] = rng.normal(0.0, film_std, size=(d, c))
            p[f"{pre}.film_bg"] = np.zeros(c)
            p[f"{pre}.film_wb"] = rng.normal(0.0, film_std, size=(d, c))
            p[f"{pre}.film_bb"] = np.zeros(c)
            cin = c
        p[f"{br}.head.w"] = rng.normal(0.0, np.sqrt(1.0 / cin), size=(cin, 1))
        p[f"{br}.head.b"] = np.zeros(1)
    if mask_head:
        p["mask.w"] = rng.normal(0.0, np.sqrt(1.0 / cin), size=(cin, 1))
        p["mask.b"] = np.zeros(1)
    p["anchor_emb"] = pool.embeddings
    return p


def parameter_count(params: dict) -> int:
    return int(sum(v.size for v in params.values()))


class ToyDepthNet:
    """Forward/backward over a parameter dict.

    The last forward pass is cached; `backward` consumes it.  With
    ``detach_mask`` the mask loss trains only the mask head and does not
    reach the near branch's features (a stop-gradient at the head's input).
    """

    def __init__(self, params: dict, detach_mask: bool = False):
        self.params = params
        self.detach_mask = detach_mask
        self._cache = None

    @property
    def has_mask_head(self) -> bool:
        return "mask.w" in self.params

    def forward(self, images: np.ndarray, anchor_index) -> ModelOutput:
        p = self.params
        x = np.asarray(images, dtype=p["enc1.w"].dtype)
        if x.ndim == 3:
            x = x[None]
        n, h, w, c = x.shape
        if h % 8 or w % 8:
            raise ValueError(f"image size {h}x{w} must be divisible by 8")
        if c != p["enc1.w"].shape[2]:
            raise ValueError(f"expected {p['enc1.w'].shape[2]} channels, got {c}")
        idx = np.broadcast_to(np.asarray(anchor_index, dtype=np.intp), (n,)).copy()
        emb = p["anchor_emb"][idx]

        caches = {}
        feats = [x]
        hcur = x
        for i in (1, 2, 3):
            z, caches[f"enc{i}"] = L.conv2d_forward(hcur, p[f"enc{i}.w"], p[f"enc{i}.b"], stride=2)
            hcur = L.silu(z)
            caches[f"enc{i}.pre"] = z
            feats.append(hcur)
        skips = {3: feats[2], 2: feats[1], 1: feats[0]}

        logits = {}
        last = {}
        for br in BRANCHES:
            hcur = feats[3]
            for stage in (3, 2, 1):
                pre = f"{br}.dec{stage}"
                up = L.upsample2x(hcur)
                cat = np.concatenate([up, skips[stage]], axis=-1)
                z, caches[pre] = L.conv2d_forward(cat, p[f"{pre}.w"], p[f"{pre}.b"])
                m, caches[pre + ".film"] = L.film_forward(
                    z, emb, p[f"{pre}.film_wg"], p[f"{pre}.film_bg"],
                    p[f"{pre}.film_wb"], p[f"{pre}.film_bb"])
                hcur = L.silu(m)
                caches[pre + ".pre"] = m
                caches[pre + ".upc"] = up.shape[-1]
            last[br] = hcur
            logits[br] = (hcur @ p[f"{br}.head.w"] + p[f"{br}.head.b"])[..., 0]
        mask_logits = None
        if self.has_mask_head:
            mask_logits = (last["near"] @ p["mask.w"] + p["mask.b"])[..., 0]

        self._cache = dict(caches=caches, last=last, idx=idx, emb=emb, feats=feats)
        return ModelOutput(
            near=L.sigmoid(logits["near"]),
            far=L.sigmoid(logits["far"]),
            mask_prob=None if mask_logits is None else L.sigmoid(mask_logits),
            near_logits=logits["near"],
            far_logits=logits["far"],
            mask_logits=mask_logits,
        )

    def backward(self, d_near_logits, d_far_logits, d_mask_logits=None) -> dict:
        """Parameter gradients given loss gradients w.r.t. the three head logits."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        p = self.params
        cache = self._cache
        caches = cache["caches"]
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        d_heads = {"near": d_near_logits, "far": d_far_logits}
        d_emb = np.zeros_like(cache["emb"])
        d_feat = [None, 0.0, 0.0, 0.0]
        d_skip = {3: 0.0, 2: 0.0, 1: 0.0}

        for br in BRANCHES:
            hl = cache["last"][br]
            dz = np.asarray(d_heads[br], dtype=hl.dtype)[..., None]
            grads[f"{br}.head.w"] += np.einsum("nhwc,nhwo->co", hl, dz)
            grads[f"{br}.head.b"] += dz.sum(axis=(0, 1, 2))
            dh = dz @ p[f"{br}.head.w"].T
            if br == "near" and self.has_mask_head and d_mask_logits is not None:
                dm = np.asarray(d_mask_logits, dtype=hl.dtype)[..., None]
                grads["mask.w"] += np.einsum("nhwc,nhwo->co", hl, dm)
                grads["mask.b"] += dm.sum(axis=(0, 1, 2))
                if not self.detach_mask:
                    dh = dh + dm @ p["mask.w"].T
            for stage in (1, 2, 3):
                pre = f"{br}.dec{stage}"
                dm_ = L.silu_backward(dh, caches[pre + ".pre"])
                dz_, de, dwg, dbg, dwb, dbb = L.film_backward(dm_, caches[pre + ".film"])
                d_emb += de
                grads[f"{pre}.film_wg"] += dwg
                grads[f"{pre}.film_bg"] += dbg
                grads[f"{pre}.film_wb"] += dwb
                grads[f"{pre}.film_bb"] += dbb
                dcat, dw, db = L.conv2d_backward(dz_, caches[pre])
                grads[f"{pre}.w"] += dw
                grads[f"{pre}.b"] += db
                upc = caches[pre + ".upc"]
                d_skip[stage] = d_skip[stage] + dcat[..., upc:]
                dh = L.upsample2x_backward(dcat[..., :upc])
            d_feat[3] = d_feat[3] + dh

        d_feat[2] = d_feat[2] + d_skip[3]
        d_feat[1] = d_feat[1] + d_skip[2]
        dh = d_feat[3]
        for i in (3, 2, 1):
            dz = L.silu_backward(dh, caches[f"enc{i}.pre"])
            dx, dw, db = L.conv2d_backward(dz, caches[f"enc{i}"])
            grads[f"enc{i}.w"] += dw
            grads[f"enc{i}.b"] += db
            if i > 1:
                dh = dx + d_feat[i - 1]
        np.add.at(grads["anchor_emb"], cache["idx"], d_emb)
        return grads
