"""Backward warping by a dense flow field with bilinear sampling."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


def _axis_weights(pos: np.ndarray, n: int):
    """Clamp sample positions to [0, n-1]; return corner indices, weight and d(clamped)/d(pos)."""
    clamped = np.clip(pos, 0, n - 1)
    lo = np.clip(np.floor(clamped), 0, max(n - 2, 0)).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = clamped - lo
    # right-continuous: the clamp passes gradient on [0, n-1)
    live = (pos >= 0) & (pos < n - 1)
    return lo, hi, frac, live


def bilinear_warp(image: Tensor, flow: Tensor) -> Tensor:
    """
    Sample `image` at (x + u, y + v) for every output pixel (x, y).

    `flow` is 2 x H x W in pixels, channel 0 horizontal. Sample coordinates
    outside the frame are clamped to the border. Differentiable with respect
    to both the image and the flow.
    """
    if image.ndim != 3 or flow.ndim != 3 or flow.shape[0] != 2:
        raise ShapeError(f"bilinear_warp expects CxHxW image and 2xHxW flow, got {image.shape}, {flow.shape}")
    c, h, w = image.shape
    if flow.shape[1:] != (h, w):
        raise ShapeError(f"flow extents {flow.shape[1:]} differ from image extents {(h, w)}")
    if not np.all(np.isfinite(flow.data)):
        raise ValueError("flow contains non-finite values")

    dt = image.dtype
    img = image.data
    fl = flow.data.astype(dt, copy=False)
    gy, gx = np.meshgrid(np.arange(h, dtype=dt), np.arange(w, dtype=dt), indexing="ij")
    x0, x1, wx, livex = _axis_weights(gx + fl[0], w)
    y0, y1, wy, livey = _axis_weights(gy + fl[1], h)
    wx = wx.astype(dt)
    wy = wy.astype(dt)

    i00 = img[:, y0, x0]
    i01 = img[:, y0, x1]
    i10 = img[:, y1, x0]
    i11 = img[:, y1, x1]
    top = (1 - wx) * i00 + wx * i01
    bot = (1 - wx) * i10 + wx * i11
    out = (1 - wy) * top + wy * bot

    def _bw(g):
        gimg = gflow = None
        if flow.requires_grad:
            dsx = ((1 - wy) * (i01 - i00) + wy * (i11 - i10)) * livex
            dsy = (bot - top) * livey
            gflow = np.stack([(g * dsx).sum(axis=0), (g * dsy).sum(axis=0)]).astype(flow.dtype)
        if image.requires_grad:
            hw = h * w
            offs = (np.arange(c) * hw)[:, None, None]
            acc = np.zeros(c * hw)
            for yy, xx, wt in (
                (y0, x0, (1 - wy) * (1 - wx)),
                (y0, x1, (1 - wy) * wx),
                (y1, x0, wy * (1 - wx)),
                (y1, x1, wy * wx),
            ):
                idx = (offs + yy * w + xx).ravel()
                acc += np.bincount(idx, weights=(g * wt).ravel(), minlength=c * hw)
            gimg = acc.reshape(c, h, w).astype(dt)
        return gimg, gflow

    return Tensor._from_op(out, (image, flow), _bw, "bilinear_warp")
