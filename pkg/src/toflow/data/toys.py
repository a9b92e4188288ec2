"""
Synthetic clips with exact ground truth.

Every scene is a static or rigidly translating background plus one triangle
sprite moving at a constant integer velocity. Integer motion keeps the
rendering exact under shifts, so ground-truth flows warp frames onto the
reference with zero residual wherever the occlusion mask is 1.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .clip import VideoClip, quantize

GREEN = (0.0, 0.8, 0.0)


@dataclass
class ToyParams:
    size: Tuple[int, int] = (48, 48)
    n_frames: int = 3
    sprite_size: Tuple[int, int] = (14, 22)
    speed: Tuple[float, float] = (1.0, 8.0)
    bg_speed: Tuple[float, float] = (0.0, 0.0)
    background: str = "black"
    sprite_color: Tuple[float, float, float] = GREEN
    sprite_texture: bool = False
    texture_sigma: float = 1.5

    def __post_init__(self):
        self.size = tuple(self.size)
        self.sprite_size = tuple(self.sprite_size)
        if self.n_frames % 2 == 0:
            raise ValueError("n_frames must be odd")
        if self.speed[1] > 8 or self.bg_speed[1] > 8:
            raise ValueError("velocities are limited to 8 px per frame")
        if self.background not in ("black", "texture"):
            raise ValueError(f"unknown background {self.background!r}")
        if self.sprite_size[1] > min(self.size):
            raise ValueError(f"sprite of {self.sprite_size[1]} px does not fit a {self.size} frame")


def triangle_mask(s: int, orientation: int) -> np.ndarray:
    """Isosceles triangle filling an s x s box, apex rotated by `orientation` quarter turns."""
    yy, xx = np.mgrid[0:s, 0:s] + 0.5
    apex = np.array([s / 2.0, 0.0])
    left = np.array([0.0, float(s)])
    right = np.array([float(s), float(s)])

    def edge(p, q):
        return (q[0] - p[0]) * (yy - p[1]) - (q[1] - p[1]) * (xx - p[0])

    e1, e2, e3 = edge(apex, right), edge(right, left), edge(left, apex)
    inside = ((e1 >= 0) & (e2 >= 0) & (e3 >= 0)) | ((e1 <= 0) & (e2 <= 0) & (e3 <= 0))
    return np.rot90(inside, orientation).copy()


def smooth_texture(rng: np.random.Generator, shape: Tuple[int, int], sigma: float, channels: int = 3) -> np.ndarray:
    noise = rng.normal(size=(channels,) + tuple(shape))
    tex = np.stack([gaussian_filter(c, sigma, mode="wrap") for c in noise])
    lo = tex.min(axis=(1, 2), keepdims=True)
    hi = tex.max(axis=(1, 2), keepdims=True)
    return 0.1 + 0.8 * (tex - lo) / np.maximum(hi - lo, 1e-12)


def integer_velocities(lo: float, hi: float) -> List[Tuple[int, int]]:
    r = int(np.floor(hi))
    out = []
    for vy in range(-r, r + 1):
        for vx in range(-r, r + 1):
            n = np.hypot(vx, vy)
            if lo <= n <= hi:
                out.append((vx, vy))
    return out


@dataclass
class SpriteScene:
    """One sprite over a background; both translate by whole pixels per frame."""

    size: Tuple[int, int]
    n_frames: int
    sprite: np.ndarray  # bool s x s
    sprite_rgb: np.ndarray  # 3 x s x s
    origin: Tuple[int, int]  # sprite top-left (y, x) in the reference frame
    velocity: Tuple[int, int]  # (vx, vy) px / frame
    canvas: np.ndarray  # 3 x (H + 2m) x (W + 2m)
    margin: int
    bg_velocity: Tuple[int, int] = (0, 0)
    meta: dict = field(default_factory=dict)

    @property
    def ref(self) -> int:
        return self.n_frames // 2

    def sprite_origin(self, t: int) -> Tuple[int, int]:
        d = t - self.ref
        return self.origin[0] + d * self.velocity[1], self.origin[1] + d * self.velocity[0]

    def sprite_cover(self, t: int) -> np.ndarray:
        h, w = self.size
        s = self.sprite.shape[0]
        y, x = self.sprite_origin(t)
        cover = np.zeros((h, w), dtype=bool)
        cover[y : y + s, x : x + s] = self.sprite
        return cover

    def background(self, t: int) -> np.ndarray:
        h, w = self.size
        d = t - self.ref
        oy = self.margin - d * self.bg_velocity[1]
        ox = self.margin - d * self.bg_velocity[0]
        return self.canvas[:, oy : oy + h, ox : ox + w]

    def render(self, t: int) -> np.ndarray:
        frame = self.background(t).copy()
        s = self.sprite.shape[0]
        y, x = self.sprite_origin(t)
        patch = frame[:, y : y + s, x : x + s]
        frame[:, y : y + s, x : x + s] = np.where(self.sprite[None], self.sprite_rgb, patch)
        return quantize(frame)

    def flow(self, a: int, b: int) -> np.ndarray:
        """Displacement carrying each pixel of frame a to its position in frame b."""
        h, w = self.size
        d = b - a
        cover = self.sprite_cover(a)
        u = np.where(cover, d * self.velocity[0], d * self.bg_velocity[0])
        v = np.where(cover, d * self.velocity[1], d * self.bg_velocity[1])
        return np.stack([u, v]).astype(np.float32)

    def occlusion(self, a: int, b: int) -> np.ndarray:
        """1 where the content of frame a at x is visible in frame b at x + flow(a, b)."""
        h, w = self.size
        f = self.flow(a, b)
        yy, xx = np.mgrid[0:h, 0:w]
        ty = yy + f[1].astype(int)
        tx = xx + f[0].astype(int)
        inside = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
        cover_a = self.sprite_cover(a)
        cover_b = self.sprite_cover(b)
        hidden = np.zeros((h, w), dtype=bool)
        hidden[inside] = cover_b[ty[inside], tx[inside]]
        valid = inside & (cover_a | ~hidden)
        return valid.astype(np.float32)[None]

    def to_clip(self, clip_id: str = "") -> VideoClip:
        frames = [self.render(t) for t in range(self.n_frames)]
        others = [j for j in range(self.n_frames) if j != self.ref]
        return VideoClip(
            frames=frames,
            ref=self.ref,
            flows={j: self.flow(self.ref, j) for j in others},
            masks={j: self.occlusion(self.ref, j) for j in others},
            meta=dict(self.meta),
            clip_id=clip_id,
        )


def make_scene(params: ToyParams, rng: np.random.Generator) -> SpriteScene:
    h, w = params.size
    n = params.n_frames
    ref = n // 2
    s = int(rng.integers(params.sprite_size[0], params.sprite_size[1] + 1))
    orientation = int(rng.integers(4))
    sprite = triangle_mask(s, orientation)

    vels = integer_velocities(*params.speed)
    feasible = [v for v in vels if abs(v[0]) * 2 * ref <= w - s and abs(v[1]) * 2 * ref <= h - s]
    if not feasible:
        raise ValueError(f"no velocity in {params.speed} keeps a {s} px sprite inside {params.size} over {n} frames")
    vx, vy = feasible[int(rng.integers(len(feasible)))]
    bvx, bvy = (0, 0)
    if params.bg_speed[1] > 0:
        bvels = integer_velocities(*params.bg_speed)
        bvx, bvy = bvels[int(rng.integers(len(bvels)))]

    # origin range keeping every frame's sprite inside the image
    ylo, yhi = max(0, -vy * ref, vy * ref), min(h - s, h - s - vy * ref, h - s + vy * ref)
    xlo, xhi = max(0, -vx * ref, vx * ref), min(w - s, w - s - vx * ref, w - s + vx * ref)
    oy = int(rng.integers(ylo, yhi + 1))
    ox = int(rng.integers(xlo, xhi + 1))

    margin = int(np.ceil(params.bg_speed[1])) * ref
    cshape = (h + 2 * margin, w + 2 * margin)
    if params.background == "texture":
        canvas = smooth_texture(rng, cshape, params.texture_sigma)
    else:
        canvas = np.zeros((3,) + cshape)
    rgb = np.asarray(params.sprite_color, dtype=np.float64)[:, None, None] * np.ones((3, s, s))
    if params.sprite_texture:
        rgb = rgb * (0.55 + 0.45 * smooth_texture(rng, (s, s), params.texture_sigma, channels=1))
    return SpriteScene(
        size=(h, w),
        n_frames=n,
        sprite=sprite,
        sprite_rgb=rgb,
        origin=(oy, ox),
        velocity=(vx, vy),
        canvas=canvas,
        margin=margin,
        bg_velocity=(bvx, bvy),
        meta={
            "velocity": [vx, vy],
            "bg_velocity": [bvx, bvy],
            "sprite_px": s,
            "orientation": orientation,
            "origin": [oy, ox],
            "params": _jsonable(asdict(params)),
        },
    )


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def clip_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def gen_triangle_toy(params: Optional[ToyParams] = None, count: int = 1, seed: int = 0, start: int = 0) -> List[VideoClip]:
    """Moving-triangle clips with ground-truth flows and occlusion masks."""
    params = params or ToyParams()
    clips = []
    for i in range(start, start + count):
        scene = make_scene(params, clip_rng(seed, i))
        clips.append(scene.to_clip(clip_id=f"{i:05d}"))
    return clips


@dataclass
class BoxNoiseParams:
    toy: ToyParams = field(default_factory=lambda: ToyParams(n_frames=7, speed=(1.0, 3.0), background="texture"))
    density: float = 0.1
    box_size: Tuple[int, int] = (2, 5)


def box_corruption(rng: np.random.Generator, shape: Tuple[int, int], density: float, box_size: Tuple[int, int]):
    """
    Drop random boxes until exactly round(density * H * W) pixels are covered;
    the last box is truncated in raster order to land on the target.
    Returns the coverage mask and per-pixel replacement colours.
    """
    h, w = shape
    target = int(round(density * h * w))
    cover = np.zeros((h, w), dtype=bool)
    colours = np.zeros((3, h, w))
    count = 0
    while count < target:
        bh, bw = rng.integers(box_size[0], box_size[1] + 1, size=2)
        y = int(rng.integers(0, h - bh + 1))
        x = int(rng.integers(0, w - bw + 1))
        rgb = rng.random(3)
        ys, xs = np.mgrid[y : y + bh, x : x + bw]
        fresh = ~cover[ys, xs]
        ys, xs = ys[fresh][: target - count], xs[fresh][: target - count]
        cover[ys, xs] = True
        colours[:, ys, xs] = rgb[:, None]
        count += len(ys)
    return cover, colours


def gen_boxnoise_toy(params: Optional[BoxNoiseParams] = None, count: int = 1, seed: int = 0, start: int = 0) -> List[VideoClip]:
    """Moving-sprite septuplets where every frame carries its own opaque noise boxes."""
    params = params or BoxNoiseParams()
    clips = []
    for i in range(start, start + count):
        rng = clip_rng(seed, i)
        scene = make_scene(params.toy, rng)
        clean = scene.to_clip(clip_id=f"{i:05d}")
        noisy = []
        for f in clean.frames:
            cover, colours = box_corruption(rng, f.shape[1:], params.density, params.box_size)
            noisy.append(quantize(np.where(cover[None], colours, f)))
        meta = dict(clean.meta, density=params.density, box_size=list(params.box_size))
        clips.append(clean.with_frames(noisy, clean=clean.frames, meta=meta))
    return clips
