"""Degradation operators: Gaussian / mixed noise, block-DCT compression, downsampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.fft import dctn, idctn

from ..heads import bicubic_resize
from .clip import VideoClip

KINDS = ("gaussian", "mixed", "blocky", "downsample")

# JPEG luminance quantisation table (ITU T.81, Annex K)
JPEG_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


@dataclass
class DegradationSpec:
    kind: str = "gaussian"
    sigma: float = 0.1
    p: float = 0.10
    q: float = 20.0
    k: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("gaussian", "mixed") and self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.q <= 0:
            raise ValueError("q must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        self.k = int(self.k)


def add_gaussian(frame: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0:
        return frame.copy()
    return np.clip(frame + rng.normal(0.0, sigma, size=frame.shape), 0.0, 1.0).astype(frame.dtype)


def salt_and_pepper(frame: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Each pixel (all channels together) becomes 0 or 1 with probability p."""
    _, h, w = frame.shape
    hit = rng.random((h, w)) < p
    value = (rng.random((h, w)) < 0.5).astype(frame.dtype)
    return np.where(hit[None], value[None], frame)


def block_dct_compress(frame: np.ndarray, q: float, block: int = 8) -> np.ndarray:
    """
    Quantise the AC coefficients of every 8x8 block DCT with the JPEG table
    scaled by q / 20. The DC term is kept exact so flat regions pass through.
    """
    c, h, w = frame.shape
    hp, wp = -(-h // block) * block, -(-w // block) * block
    x = np.pad(frame.astype(np.float64), ((0, 0), (0, hp - h), (0, wp - w)), mode="edge") * 255.0
    blocks = x.reshape(c, hp // block, block, wp // block, block).transpose(0, 1, 3, 2, 4)
    coef = dctn(blocks, axes=(-2, -1), norm="ortho")
    step = JPEG_LUMA * (q / 20.0)
    quant = np.round(coef / step) * step
    quant[..., 0, 0] = coef[..., 0, 0]
    rec = idctn(quant, axes=(-2, -1), norm="ortho")
    rec = rec.transpose(0, 1, 3, 2, 4).reshape(c, hp, wp)[:, :h, :w] / 255.0
    return np.clip(rec, 0.0, 1.0).astype(frame.dtype)


def degrade_frame(frame: np.ndarray, spec: DegradationSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "gaussian":
        return add_gaussian(frame, spec.sigma, rng)
    if spec.kind == "mixed":
        return salt_and_pepper(add_gaussian(frame, spec.sigma, rng), spec.p, rng)
    if spec.kind == "blocky":
        return block_dct_compress(frame, spec.q)
    out = bicubic_resize(frame.astype(np.float64), 1.0 / spec.k).data
    return np.clip(out, 0.0, 1.0).astype(frame.dtype)


def degrade(clip: VideoClip, spec: DegradationSpec, seed: int = 0, rng: Optional[np.random.Generator] = None) -> VideoClip:
    """Degrade every frame; the originals move to `clean`."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    frames = [degrade_frame(f, spec, rng) for f in clip.frames]
    meta = dict(clip.meta, degradation={"kind": spec.kind, "sigma": spec.sigma, "p": spec.p, "q": spec.q, "k": spec.k})
    clean = clip.clean if clip.clean is not None else clip.frames
    return VideoClip(frames=frames, ref=clip.ref, flows=clip.flows, masks=clip.masks, clean=clean, meta=meta, clip_id=clip.clip_id)
