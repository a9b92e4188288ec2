"""Coarse-to-fine pyramid flow estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ShapeError
from .nn import ConvStack, ParamModule
from .tensor import DEFAULT_DTYPE, Tensor, as_tensor, concat, narrow, resize_bilinear, separable
from .warp import bilinear_warp

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass
class FlowPyramidConfig:
    levels: int = 4
    channels: Tuple[int, ...] = (32, 64, 32, 16, 2)
    kernel: int = 7
    prewarp: bool = True
    frame_channels: int = 3

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if self.levels < 1:
            raise ConfigurationError("levels must be >= 1")
        if self.channels[-1] != 2:
            raise ConfigurationError("the last flow layer must emit 2 channels")

    @property
    def in_channels(self) -> int:
        return 2 * self.frame_channels + 2


def _downsample_matrix(n: int) -> np.ndarray:
    """Blur with the 5-tap binomial kernel (edge-replicated) and keep even samples."""
    m = np.zeros((n // 2, n))
    for i in range(n // 2):
        centre = 2 * i
        for t, wgt in zip(range(-2, 3), BINOMIAL_5):
            m[i, min(max(centre + t, 0), n - 1)] += wgt
    return m


def pyramid_down(x: Tensor) -> Tensor:
    _, h, w = x.shape
    return separable(x, _downsample_matrix(h), _downsample_matrix(w), op="pyramid_down")


def gaussian_pyramid(frame: Tensor, levels: int) -> List[Tensor]:
    """Binomial pyramid, coarsest level first. Extents must be divisible by 2**(levels-1)."""
    if levels < 1:
        raise ConfigurationError("levels must be >= 1")
    _, h, w = frame.shape
    f = 2 ** (levels - 1)
    if h % f or w % f:
        raise ShapeError(f"{h}x{w} frame is not divisible by {f}; pad before building {levels} levels")
    pyr = [frame]
    for _ in range(levels - 1):
        pyr.append(pyramid_down(pyr[-1]))
    return pyr[::-1]


def _replicate_matrix(n: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n))
    m[np.arange(n_out), np.minimum(np.arange(n_out), n - 1)] = 1.0
    return m


def pad_to_multiple(x: Tensor, multiple: int) -> Tensor:
    """Edge-replicate on the bottom/right so both extents divide `multiple`."""
    _, h, w = x.shape
    hp = -(-h // multiple) * multiple
    wp = -(-w // multiple) * multiple
    if (hp, wp) == (h, w):
        return x
    return separable(x, _replicate_matrix(h, hp), _replicate_matrix(w, wp), op="pad_replicate")


def crop(x: Tensor, h: int, w: int) -> Tensor:
    if x.shape[1:] == (h, w):
        return x
    return narrow(narrow(x, 0, h, axis=1), 0, w, axis=2)


def upsample_flow(flow: Tensor) -> Tensor:
    """Bilinear x2 resize; displacements double with the resolution."""
    return resize_bilinear(flow, 2.0) * 2.0


def scale_flow(flow: Tensor, size: Tuple[int, int]) -> Tensor:
    """Resample a flow field to `size`, rescaling displacements to the new pixel units."""
    _, h, w = flow.shape
    if (h, w) == tuple(size):
        return flow
    s = size[0] / h
    return resize_bilinear(flow, s, size=size) * s


class FlowNet(ParamModule):
    """SpyNet-style estimator: one residual conv stack per pyramid level."""

    def __init__(self, config: Optional[FlowPyramidConfig] = None, seed: int = 0, dtype=DEFAULT_DTYPE, prefix: str = "flow"):
        self.config = config or FlowPyramidConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.subnets = [
            ConvStack(
                f"{prefix}.level{k}",
                cfg.in_channels,
                cfg.channels,
                [cfg.kernel] * len(cfg.channels),
                rng,
                norm=True,
                zero_last=True,
                dtype=dtype,
            )
            for k in range(cfg.levels)
        ]
        self.params = {}
        for s in self.subnets:
            self.params.update(s.params)

    def subnet(self, level: int, ref_level: Tensor, other_level: Tensor, up_flow: Tensor) -> Tensor:
        return flow_subnet(ref_level, other_level, up_flow, self.subnets[level], prewarp=self.config.prewarp)

    def __call__(self, ref: Tensor, other: Tensor) -> Tensor:
        return self.estimate(ref, other)[-1]

    def estimate(self, ref: Tensor, other: Tensor) -> List[Tensor]:
        """Per-level flows, coarsest first; the last entry is the full-resolution field."""
        ref, other = as_tensor(ref), as_tensor(other)
        if ref.shape != other.shape:
            raise ShapeError(f"frames differ in shape: {ref.shape} vs {other.shape}")
        cfg = self.config
        _, h, w = ref.shape
        mult = 2 ** (cfg.levels - 1)
        pr = gaussian_pyramid(pad_to_multiple(ref, mult), cfg.levels)
        po = gaussian_pyramid(pad_to_multiple(other, mult), cfg.levels)
        flows = []
        flow = Tensor(np.zeros((2,) + pr[0].shape[1:], dtype=ref.dtype))
        for k in range(cfg.levels):
            if k > 0:
                flow = upsample_flow(flow)
            flow = self.subnet(k, pr[k], po[k], flow)
            flows.append(flow)
        flows[-1] = crop(flows[-1], h, w)
        return flows


def flow_subnet(ref_level: Tensor, other_level: Tensor, up_flow: Tensor, stack: ConvStack, prewarp: bool = True) -> Tensor:
    """Refine `up_flow` by the residual predicted from [ref, warped other, up_flow]."""
    if not (ref_level.shape[1:] == other_level.shape[1:] == up_flow.shape[1:]):
        raise ShapeError(
            f"level extents disagree: {ref_level.shape}, {other_level.shape}, {up_flow.shape}"
        )
    moved = bilinear_warp(other_level, up_flow) if prewarp else other_level
    return up_flow + stack(concat([ref_level, moved, up_flow]))


def estimate_flow(ref: Tensor, other: Tensor, net: FlowNet) -> Tensor:
    return net(ref, other)


def estimate_interp_flows(frame1: Tensor, frame3: Tensor, net21: FlowNet, net23: FlowNet) -> Tuple[Tensor, Tensor]:
    """v21 and v23 for the unseen middle frame, both predicted from (frame1, frame3)."""
    return net21(frame1, frame3), net23(frame1, frame3)
