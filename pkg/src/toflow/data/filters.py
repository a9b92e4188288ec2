"""Benchmark selection: motion/intensity/linearity filters, shot cuts, flow histograms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..tensor import Tensor
from ..warp import bilinear_warp

MOTION_PX = 3.0
MOTION_FRACTION = 0.05
WARP_L1 = 15.0 / 255.0
LINEARITY_PX = 1.0
KEEP_RANGE = (1.0, 8.0)
BIN_WIDTH = 0.25


@dataclass
class FilterResult:
    accepted: bool
    reasons: List[str] = field(default_factory=list)
    stats: Dict[str, float] = field(default_factory=dict)

    @property
    def reason(self) -> str:
        return self.reasons[0] if self.reasons else ""


def magnitude(flow: np.ndarray) -> np.ndarray:
    f = np.asarray(flow, dtype=np.float64)
    return np.sqrt(f[0] ** 2 + f[1] ** 2)


def warp_residual(reference: np.ndarray, frame: np.ndarray, flow: np.ndarray) -> float:
    warped = bilinear_warp(Tensor(np.asarray(frame, dtype=np.float64)), Tensor(np.asarray(flow, dtype=np.float64))).data
    return float(np.mean(np.abs(warped - reference)))


def motion_fraction(flows: Sequence[np.ndarray]) -> float:
    """Share of pixels whose largest displacement across `flows` exceeds MOTION_PX."""
    peak = np.max([magnitude(f) for f in flows], axis=0)
    return float(np.mean(peak > MOTION_PX))


def linearity_error(v21: np.ndarray, v23: np.ndarray) -> float:
    """Mean |v21 + v23|: zero when the middle frame sits halfway along a straight path."""
    return float(np.mean(magnitude(np.asarray(v21) + np.asarray(v23))))


def _common_criteria(frames: Sequence[np.ndarray], ref: int, flows: Dict[int, np.ndarray]) -> FilterResult:
    res = FilterResult(True)
    frac = motion_fraction(list(flows.values()))
    resid = float(np.mean([warp_residual(frames[ref], frames[j], f) for j, f in flows.items()]))
    res.stats.update(motion_fraction=frac, warp_l1=resid)
    if not frac > MOTION_FRACTION:
        res.reasons.append("a")
    if not resid <= WARP_L1:
        res.reasons.append("b")
    return res


def filter_interp_triplet(frames: Sequence[np.ndarray], v21: np.ndarray, v23: np.ndarray) -> FilterResult:
    """
    Accept a triplet iff (a) more than 5% of pixels move over 3 px, (b) the
    mean warp residual is at most 15/255, and (c) the motion is linear.
    """
    frames = getattr(frames, "frames", frames)
    if len(frames) != 3:
        raise ValueError(f"a triplet has 3 frames, got {len(frames)}")
    res = _common_criteria(frames, 1, {0: v21, 2: v23})
    lin = linearity_error(v21, v23)
    res.stats["linearity"] = lin
    if not lin < LINEARITY_PX:
        res.reasons.append("c")
    res.accepted = not res.reasons
    return res


def filter_septuplet(frames: Sequence[np.ndarray], flows: Dict[int, np.ndarray], ref: int = None) -> FilterResult:
    """Criteria (a) and (b) of the triplet filter over every reference-to-neighbour flow."""
    if ref is None:
        ref = getattr(frames, "ref", len(getattr(frames, "frames", frames)) // 2)
    frames = getattr(frames, "frames", frames)
    res = _common_criteria(frames, ref, flows)
    res.accepted = not res.reasons
    return res


def shot_detect(frames: Sequence[np.ndarray], threshold: float) -> List[int]:
    """Indices i where a new shot starts (mean |I_i - I_{i-1}| > threshold)."""
    if len(frames) < 2:
        raise ValueError("shot detection needs at least two frames")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    return [
        i
        for i in range(1, len(frames))
        if float(np.mean(np.abs(np.asarray(frames[i], np.float64) - np.asarray(frames[i - 1], np.float64)))) > threshold
    ]


def split_shots(frames: Sequence[np.ndarray], threshold: float) -> List[Tuple[int, int]]:
    cuts = [0] + shot_detect(frames, threshold) + [len(frames)]
    return list(zip(cuts[:-1], cuts[1:]))


@dataclass
class FlowHistogram:
    edges: np.ndarray
    pixel_counts: np.ndarray
    image_counts: np.ndarray
    image_means: np.ndarray

    @property
    def in_range(self) -> np.ndarray:
        lo, hi = KEEP_RANGE
        return (self.image_means >= lo) & (self.image_means <= hi)

    def to_dict(self) -> dict:
        return {
            "bin_width": BIN_WIDTH,
            "edges": self.edges.tolist(),
            "pixel_counts": self.pixel_counts.tolist(),
            "image_counts": self.image_counts.tolist(),
            "image_means": self.image_means.tolist(),
            "in_range": self.in_range.tolist(),
        }


def flow_histogram(flows: Sequence[np.ndarray], bin_width: float = BIN_WIDTH) -> FlowHistogram:
    """Fixed-width magnitude histograms over all pixels and over per-image means."""
    mags = [magnitude(f) for f in flows]
    means = np.array([m.mean() for m in mags])
    top = max([m.max() for m in mags] + [0.0])
    nbins = int(np.floor(top / bin_width)) + 1
    edges = np.arange(nbins + 1) * bin_width
    pix = np.zeros(nbins, dtype=np.int64)
    for m in mags:
        pix += np.bincount(np.minimum((m / bin_width).astype(np.int64), nbins - 1).ravel(), minlength=nbins)
    img = np.bincount(np.minimum((means / bin_width).astype(np.int64), nbins - 1), minlength=nbins)
    return FlowHistogram(edges, pix, img, means)


def keep_in_range(flows: Sequence[np.ndarray]) -> List[int]:
    """Indices of flows whose mean magnitude lies within KEEP_RANGE."""
    return [int(i) for i in np.flatnonzero(flow_histogram(flows).in_range)]
