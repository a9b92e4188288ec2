"""Task-specific image processing heads and bicubic resampling."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ShapeError
from .nn import ConvStack, ParamModule
from .tensor import DEFAULT_DTYPE, Tensor, add, concat, mul, separable

TASKS = ("interpolation", "denoising", "deblocking", "super-resolution")


def keys_cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def bicubic_matrix(n_in: int, n_out: int, scale: float, antialias: bool = True) -> np.ndarray:
    """
    Per-axis cubic resampling weights with half-pixel centres. When shrinking,
    the kernel is stretched by 1/scale so it also acts as the low-pass prefilter.
    Out-of-range taps are folded onto the border sample.
    """
    stretch = scale if (antialias and scale < 1) else 1.0
    support = 2.0 / stretch
    centres = (np.arange(n_out) + 0.5) / scale - 0.5
    left = np.floor(centres - support).astype(np.int64)
    taps = int(np.ceil(2 * support)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    wts = stretch * keys_cubic(stretch * (centres[:, None] - idx))
    wts /= wts.sum(axis=1, keepdims=True)
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.repeat(np.arange(n_out), taps), np.clip(idx, 0, n_in - 1).ravel()), wts.ravel())
    return m


def bicubic_resize(frame: Union[Tensor, np.ndarray], factor: Union[float, Fraction]) -> Tensor:
    """Keys (a = -0.5) resize by `factor`, antialiased when downscaling."""
    factor = float(factor)
    if factor <= 0:
        raise ConfigurationError(f"resize factor must be positive, got {factor}")
    x = frame if isinstance(frame, Tensor) else Tensor(np.asarray(frame))
    _, h, w = x.shape
    ho, wo = int(round(h * factor)), int(round(w * factor))
    if ho < 1 or wo < 1:
        raise ConfigurationError(f"resizing {h}x{w} by {factor} leaves no pixels")
    return separable(x, bicubic_matrix(h, ho, factor), bicubic_matrix(w, wo, factor), op="bicubic_resize")


@dataclass
class HeadConfig:
    task: str = "interpolation"
    use_mask: bool = False
    n_frames: int = 3
    channels: Tuple[int, ...] = (64, 64, 3)
    kernels: Tuple[int, ...] = (9, 1, 1)
    frame_channels: int = 3

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.use_mask and self.task != "interpolation":
            raise ConfigurationError("masks are only used for interpolation")
        self.channels = tuple(self.channels)
        self.kernels = tuple(self.kernels)

    @classmethod
    def for_task(cls, task: str, use_mask: bool = False, n_frames: Optional[int] = None, width: int = 64) -> "HeadConfig":
        if task == "super-resolution":
            return cls(task, False, n_frames or 7, (width, width, width, 3), (9, 9, 1, 1))
        if task == "interpolation":
            return cls(task, use_mask, 3, (width, width, 3), (9, 1, 1))
        return cls(task, False, n_frames or 7, (width, width, 3), (9, 1, 1))


class InterpHead(ParamModule):
    """Average of the two warped frames plus a learned residual."""

    def __init__(self, config: HeadConfig, seed: int = 0, dtype=DEFAULT_DTYPE, prefix: str = "head"):
        self.config = config
        c = config.frame_channels
        self.in_channels = 4 * c if config.use_mask else 2 * c
        self.stack = ConvStack(prefix, self.in_channels, config.channels, config.kernels, np.random.default_rng(seed), dtype=dtype)
        self.params = self.stack.params

    def __call__(self, i21: Tensor, i23: Tensor, i21p: Optional[Tensor] = None, i23p: Optional[Tensor] = None) -> Tensor:
        return interp_head(i21, i23, i21p, i23p, self)


def interp_head(i21: Tensor, i23: Tensor, i21p: Optional[Tensor], i23p: Optional[Tensor], head: InterpHead) -> Tensor:
    if i21.shape != i23.shape:
        raise ShapeError(f"warped frames differ: {i21.shape} vs {i23.shape}")
    masked = i21p is not None or i23p is not None
    if masked != head.config.use_mask:
        raise ShapeError("masked frames must be supplied exactly when the head uses masks")
    parts = [i21, i23]
    if masked:
        if i21p is None or i23p is None or i21p.shape != i21.shape or i23p.shape != i21.shape:
            raise ShapeError("both masked frames are required, with the warped frames' shape")
        parts += [i21p, i23p]
    average = mul(add(i21, i23), 0.5)
    return add(average, head.stack(concat(parts)))


class DenoiseHead(ParamModule):
    """Three convolutions over the registered stack; no residual path."""

    def __init__(self, config: HeadConfig, seed: int = 0, dtype=DEFAULT_DTYPE, prefix: str = "head"):
        self.config = config
        self.in_channels = config.n_frames * config.frame_channels
        self.stack = ConvStack(
            prefix, self.in_channels, config.channels, config.kernels, np.random.default_rng(seed), zero_last=False, dtype=dtype
        )
        self.params = self.stack.params

    def __call__(self, frames: Sequence[Tensor]) -> Tensor:
        return denoise_head(frames, self)


def denoise_head(frames: Sequence[Tensor], head: DenoiseHead) -> Tensor:
    frames = list(frames)
    if len(frames) != head.config.n_frames:
        raise ShapeError(f"expected a stack of {head.config.n_frames} frames, got {len(frames)}")
    return head.stack(concat(frames))


class SRHead(ParamModule):
    """Four convolutions on the upsampled stack, added to the bicubic reference."""

    def __init__(self, config: HeadConfig, seed: int = 0, dtype=DEFAULT_DTYPE, prefix: str = "head"):
        self.config = config
        self.in_channels = config.n_frames * config.frame_channels
        self.stack = ConvStack(prefix, self.in_channels, config.channels, config.kernels, np.random.default_rng(seed), dtype=dtype)
        self.params = self.stack.params

    def __call__(self, frames: Sequence[Tensor], reference_up: Tensor) -> Tensor:
        return sr_head(frames, reference_up, self)


def sr_head(frames: Sequence[Tensor], reference_up: Tensor, head: SRHead) -> Tensor:
    frames = list(frames)
    if len(frames) != head.config.n_frames:
        raise ShapeError(f"expected a stack of {head.config.n_frames} frames, got {len(frames)}")
    for f in frames:
        if f.shape != reference_up.shape:
            raise ShapeError(f"stack frame {f.shape} is not at the output resolution {reference_up.shape}")
    return add(reference_up, head.stack(concat(frames)))
