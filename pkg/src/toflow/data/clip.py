from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np


@dataclass
class VideoClip:
    """
    Frames I_1..I_N as C x H x W float arrays in [0, 1].

    Indices are 0-based throughout (`ref` is the middle frame, N // 2).
    `flows[j]` is the ground-truth field from the reference frame to frame j,
    so bilinear_warp(frames[j], flows[j]) reproduces the reference wherever
    `masks[j]` is 1. `clean` holds the undegraded frames of a degraded clip.
    """

    frames: List[np.ndarray]
    ref: int
    flows: Optional[Dict[int, np.ndarray]] = None
    masks: Optional[Dict[int, np.ndarray]] = None
    clean: Optional[List[np.ndarray]] = None
    meta: dict = field(default_factory=dict)
    clip_id: str = ""

    def __post_init__(self):
        shapes = {f.shape for f in self.frames}
        if len(shapes) != 1:
            raise ValueError(f"frames disagree in shape: {sorted(shapes)}")
        if not 0 <= self.ref < len(self.frames):
            raise ValueError(f"reference index {self.ref} out of range for {len(self.frames)} frames")

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def shape(self):
        return self.frames[0].shape

    @property
    def target(self) -> np.ndarray:
        """The frame a task model is scored against: the clean reference."""
        return (self.clean if self.clean is not None else self.frames)[self.ref]

    def with_frames(self, frames: List[np.ndarray], **kw) -> "VideoClip":
        return replace(self, frames=frames, **kw)


def to_u8(x: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def from_u8(x: np.ndarray) -> np.ndarray:
    return (x.astype(np.float64) / 255.0).astype(np.float32)


def quantize(x: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so frames survive a PNG round-trip exactly."""
    return from_u8(to_u8(x))
