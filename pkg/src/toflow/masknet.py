"""Occlusion masks: the learned pyramid, the consistency oracle, and masking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ShapeError
from .flownet import crop, pad_to_multiple, scale_flow
from .nn import ConvStack, ParamModule
from .tensor import DEFAULT_DTYPE, Tensor, concat, mul, narrow, resize_bilinear, sigmoid
from .warp import bilinear_warp


@dataclass
class MaskPyramidConfig:
    levels: int = 4
    channels: Tuple[int, ...] = (32, 64, 32, 16, 2)
    kernel: int = 7
    init_bias: float = 2.0

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if self.levels < 1:
            raise ConfigurationError("levels must be >= 1")
        if self.channels[-1] != 2:
            raise ConfigurationError("the mask network emits exactly two masks")


class MaskNet(ParamModule):
    """
    Coarse-to-fine mask estimator. Level 0 sees the two flows (4 channels);
    every finer level also sees the previous masks upsampled x2 (6 channels).
    """

    def __init__(self, config: Optional[MaskPyramidConfig] = None, seed: int = 0, dtype=DEFAULT_DTYPE, prefix: str = "mask"):
        self.config = config or MaskPyramidConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.subnets = []
        self.params = {}
        for k in range(cfg.levels):
            s = ConvStack(
                f"{prefix}.level{k}",
                4 if k == 0 else 6,
                cfg.channels,
                [cfg.kernel] * len(cfg.channels),
                rng,
                norm=True,
                zero_last=True,
                dtype=dtype,
            )
            # start from "mostly valid" so masked frames are not blacked out at init
            s.layers[-1]["bias"].data[:] = cfg.init_bias
            self.subnets.append(s)
            self.params.update(s.params)

    def __call__(self, v21: Tensor, v23: Tensor) -> Tuple[Tensor, Tensor]:
        return estimate_masks(v21, v23, self)


def estimate_masks(v21: Tensor, v23: Tensor, net: MaskNet) -> Tuple[Tensor, Tensor]:
    if v21.shape != v23.shape:
        raise ShapeError(f"flow shapes differ: {v21.shape} vs {v23.shape}")
    levels = net.config.levels
    _, h, w = v21.shape
    mult = 2 ** (levels - 1)
    flows = pad_to_multiple(concat([v21, v23]), mult)
    _, hp, wp = flows.shape
    masks = None
    for k in range(levels):
        f = 2 ** (levels - 1 - k)
        size = (hp // f, wp // f)
        level_flows = scale_flow(flows, size)
        if masks is None:
            inp = level_flows
        else:
            inp = concat([level_flows, resize_bilinear(masks, 2.0)])
        masks = sigmoid(net.subnets[k](inp))
    masks = crop(masks, h, w)
    return narrow(masks, 0, 1), narrow(masks, 1, 2)


def apply_masks(i21: Tensor, i23: Tensor, m21: Tensor, m23: Tensor) -> Tuple[Tensor, Tensor]:
    """Multiply each warped frame by its 1-channel mask, broadcast over colour."""
    for frame, mask in ((i21, m21), (i23, m23)):
        if mask.ndim != 3 or mask.shape[0] != 1 or frame.shape[1:] != mask.shape[1:]:
            raise ShapeError(f"mask {mask.shape} does not fit frame {frame.shape}")
    return mul(i21, m21), mul(i23, m23)


def occlusion_oracle(flow_fwd: np.ndarray, flow_bwd: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """
    Forward-backward consistency mask for the frame `flow_fwd` starts in.

    A pixel x is valid iff |f(x) + b(x + f(x))| < threshold, with b sampled
    bilinearly (border-clamped). Returns a 1 x H x W float array of 0/1.
    """
    f = np.asarray(flow_fwd, dtype=np.float64)
    b = np.asarray(flow_bwd, dtype=np.float64)
    if f.shape != b.shape or f.ndim != 3 or f.shape[0] != 2:
        raise ShapeError(f"need matching 2xHxW flows, got {f.shape} and {b.shape}")
    b_at = bilinear_warp(Tensor(b), Tensor(f)).data
    resid = np.sqrt(((f + b_at) ** 2).sum(axis=0))
    return (resid < threshold).astype(np.float64)[None]
