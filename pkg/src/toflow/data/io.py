"""On-disk formats: .flo flow files, 8-bit PNG frames and masks, corpus directories."""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from PIL import Image

from ..errors import FormatError
from .clip import VideoClip, from_u8, to_u8

FLO_MAGIC = 202021.25
PathLike = Union[str, Path]


def flo_bytes(flow: np.ndarray) -> bytes:
    f = np.asarray(flow)
    if f.ndim != 3 or f.shape[0] != 2:
        raise FormatError(f"flow must be 2 x H x W, got {f.shape}")
    _, h, w = f.shape
    body = np.ascontiguousarray(f.transpose(1, 2, 0)).astype("<f4").tobytes()
    return struct.pack("<fii", FLO_MAGIC, w, h) + body


def parse_flo(buf: bytes) -> np.ndarray:
    if len(buf) < 12:
        raise FormatError("flow file shorter than its header")
    magic, w, h = struct.unpack("<fii", buf[:12])
    if magic != FLO_MAGIC:
        raise FormatError(f"bad flow magic {magic!r}")
    if w <= 0 or h <= 0:
        raise FormatError(f"bad flow extents {w}x{h}")
    need = 12 + 8 * w * h
    if len(buf) != need:
        raise FormatError(f"flow payload is {len(buf) - 12} bytes, expected {need - 12}")
    data = np.frombuffer(buf, dtype="<f4", offset=12).reshape(h, w, 2)
    return data.transpose(2, 0, 1).astype(np.float32)


def write_flo(path: PathLike, flow: np.ndarray) -> None:
    Path(path).write_bytes(flo_bytes(flow))


def read_flo(path: PathLike) -> np.ndarray:
    return parse_flo(Path(path).read_bytes())


def write_png(path: PathLike, image: np.ndarray) -> None:
    """C x H x W floats in [0, 1] (C = 1 or 3) to an 8-bit PNG."""
    a = np.asarray(image)
    if a.ndim != 3 or a.shape[0] not in (1, 3):
        raise FormatError(f"expected 1 x H x W or 3 x H x W, got {a.shape}")
    u8 = to_u8(a)
    img = Image.fromarray(u8[0], mode="L") if a.shape[0] == 1 else Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    img.save(path, format="PNG", optimize=False)


def read_png(path: PathLike) -> np.ndarray:
    with Image.open(path) as img:
        a = np.asarray(img)
    if a.ndim == 2:
        return from_u8(a[None])
    return from_u8(a[..., :3].transpose(2, 0, 1))


def save_clip(clip: VideoClip, directory: PathLike) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    r = clip.ref + 1
    for i, f in enumerate(clip.frames):
        write_png(d / f"frame_{i + 1:02d}.png", f)
    if clip.clean is not None:
        for i, f in enumerate(clip.clean):
            write_png(d / f"clean_{i + 1:02d}.png", f)
    for j, fl in (clip.flows or {}).items():
        write_flo(d / f"flow_{r}{j + 1}.flo", fl)
    for j, m in (clip.masks or {}).items():
        write_png(d / f"mask_{r}{j + 1}.png", m)
    meta = dict(clip.meta, n_frames=clip.n, ref=r)
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return d


def load_clip(directory: PathLike) -> VideoClip:
    d = Path(directory)
    meta_path = d / "meta.json"
    if not meta_path.exists():
        raise FormatError(f"{d} has no meta.json")
    meta = json.loads(meta_path.read_text())
    n, r = int(meta.pop("n_frames")), int(meta.pop("ref"))
    frames = [read_png(d / f"frame_{i + 1:02d}.png") for i in range(n)]
    clean = None
    if (d / "clean_01.png").exists():
        clean = [read_png(d / f"clean_{i + 1:02d}.png") for i in range(n)]
    flows: Dict[int, np.ndarray] = {}
    masks: Dict[int, np.ndarray] = {}
    for j in range(n):
        if j + 1 == r:
            continue
        fp = d / f"flow_{r}{j + 1}.flo"
        mp = d / f"mask_{r}{j + 1}.png"
        if fp.exists():
            flows[j] = read_flo(fp)
        if mp.exists():
            masks[j] = read_png(mp)
    return VideoClip(frames, r - 1, flows or None, masks or None, clean, meta, clip_id=d.name)


def save_corpus(clips: List[VideoClip], root: PathLike, split: str) -> List[Path]:
    return [save_clip(c, Path(root) / split / c.clip_id) for c in clips]


def load_corpus(root: PathLike, split: str) -> List[VideoClip]:
    base = Path(root) / split
    if not base.is_dir():
        raise FormatError(f"no split {split!r} under {root}")
    return [load_clip(p) for p in sorted(base.iterdir()) if p.is_dir()]


def tree_hashes(root: PathLike) -> Dict[str, str]:
    """sha256 of every file under `root`, keyed by relative posix path."""
    base = Path(root)
    return {
        p.relative_to(base).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(base.rglob("*"))
        if p.is_file()
    }
