"""PSNR / SSIM evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import ShapeError

PSNR_CAP = 99.0
LUMA = np.array([0.299, 0.587, 0.114])


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def psnr(a, b) -> float:
    """10 log10(1 / MSE) over all channels jointly; identical inputs give PSNR_CAP."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


def to_luma(x: np.ndarray) -> np.ndarray:
    if x.ndim == 3 and x.shape[0] == 3:
        return np.tensordot(LUMA, x, axes=1)
    if x.ndim == 3 and x.shape[0] == 1:
        return x[0]
    if x.ndim == 2:
        return x
    raise ShapeError(f"cannot take luma of shape {x.shape}")


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    h, w = img.shape
    rows = np.zeros((h - k + 1, w))
    for i, wt in enumerate(g):
        rows += wt * img[i : i + h - k + 1]
    out = np.zeros((h - k + 1, w - k + 1))
    for j, wt in enumerate(g):
        out += wt * rows[:, j : j + w - k + 1]
    return out


def ssim(a, b, win: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Windowed SSIM on luma, averaged over fully-contained windows."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: {a.shape} vs {b.shape}")
    ya, yb = to_luma(a), to_luma(b)
    if min(ya.shape) < win:
        raise ShapeError(f"image {ya.shape} is smaller than the {win}x{win} window")
    g = gaussian_window(win, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(ya, g)
    mu_b = _filter_valid(yb, g)
    s_aa = _filter_valid(ya * ya, g) - mu_a * mu_a
    s_bb = _filter_valid(yb * yb, g) - mu_b * mu_b
    s_ab = _filter_valid(ya * yb, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    clip_ids: List[str] = field(default_factory=list)
    psnr: List[float] = field(default_factory=list)
    ssim: List[float] = field(default_factory=list)

    def add(self, clip_id: str, output, target) -> None:
        self.clip_ids.append(clip_id)
        self.psnr.append(psnr(output, target))
        self.ssim.append(ssim(output, target) if min(_arr(output).shape[-2:]) >= 11 else float("nan"))

    @property
    def count(self) -> int:
        return len(self.clip_ids)

    @property
    def mean_psnr(self) -> float:
        return float(sum(self.psnr) / len(self.psnr)) if self.psnr else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(sum(self.ssim) / len(self.ssim)) if self.ssim else float("nan")

    def jsonl(self) -> str:
        return "".join(
            json.dumps({"clip": c, "psnr": p, "ssim": s}, sort_keys=True) + "\n"
            for c, p, s in zip(self.clip_ids, self.psnr, self.ssim)
        )

    def summary(self) -> dict:
        return {"count": self.count, "mean_psnr": self.mean_psnr, "mean_ssim": self.mean_ssim}


def mean_psnr(outputs: Sequence, targets: Sequence) -> float:
    vals = [psnr(o, t) for o, t in zip(outputs, targets)]
    return float(sum(vals) / len(vals))
