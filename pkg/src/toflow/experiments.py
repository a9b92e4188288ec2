"""
Toy-scale experiments shared by the acceptance tests and scripts/.

Each runner takes a small dataclass config and returns a plain dict of
numbers (PSNRs in dB, EPE in px, wall time in s) so callers can compare,
print or dump them as JSON.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .checkpoint import load_checkpoint
from .data import BoxNoiseParams, DegradationSpec, ToyParams, degrade, gen_boxnoise_toy, gen_triangle_toy
from .data.clip import VideoClip
from .metrics import psnr
from .pipeline import (
    TaskConfig,
    TaskModel,
    evaluate,
    flow_epe,
    no_grad,
    pretrain_flow,
    pretrain_mask,
    train_joint,
    training_pairs,
    warp_average_baseline,
)

TOY_CHANNELS = (16, 32, 16, 8, 2)

Log = Optional[Callable[[dict], None]]


def split(clips: List[VideoClip], n_val: int) -> Tuple[List[VideoClip], List[VideoClip]]:
    return clips[:-n_val], clips[-n_val:]


def mean_psnr(outputs, clips) -> float:
    return float(np.mean([psnr(o, c.target) for o, c in zip(outputs, clips)]))


def gt_warp_average_psnr(clips: List[VideoClip]) -> float:
    return mean_psnr([warp_average_baseline(c) for c in clips], clips)


def occluded_psnr(model: TaskModel, clips: List[VideoClip]) -> float:
    """PSNR over pixels that are occluded in either outer frame."""
    se, n = 0.0, 0
    with no_grad(model.params):
        for c in clips:
            out = np.clip(model(c.frames).data, 0.0, 1.0)
            sel = (c.masks[0][0] < 0.5) | (c.masks[c.n - 1][0] < 0.5)
            se += float(((out - c.target) ** 2)[:, sel].sum())
            n += int(sel.sum()) * out.shape[0]
    return float(10 * np.log10(n / se)) if se > 0 else 99.0


def _timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t


# -- interpolation: joint vs ground-truth flow vs frozen flow -----------------


@dataclass
class InterpToyConfig:
    count: int = 500
    n_val: int = 50
    seed: int = 7
    model_seed: int = 0
    toy: ToyParams = field(default_factory=ToyParams)
    # still sprites added to the training split only; without them the flow net never predicts zero motion
    static_count: int = 200
    channels: Tuple[int, ...] = TOY_CHANNELS
    lr: float = 3e-4
    flow_steps: int = 600
    joint_steps: int = 3000


def run_interp_toy(cfg: InterpToyConfig = InterpToyConfig(), log: Log = None) -> Dict[str, float]:
    """Pretrain flow once, then train jointly and with the flow frozen from the same start."""
    train, val = split(gen_triangle_toy(cfg.toy, count=cfg.count, seed=cfg.seed), cfg.n_val)
    if cfg.static_count:
        train += gen_triangle_toy(replace(cfg.toy, speed=(0.0, 0.0)), count=cfg.static_count, seed=cfg.seed + 1)
    task = TaskConfig(task="interpolation", flow_channels=cfg.channels, lr=cfg.lr, pretrain_lr=cfg.lr, seed=cfg.model_seed)
    model = TaskModel(task)
    _, t_flow = _timed(pretrain_flow, model, train, steps=cfg.flow_steps, log=log)
    start = load_checkpoint(model.to_bytes())
    res = {"gt_warp_average": gt_warp_average_psnr(val), "val_epe": flow_epe(model, val)}
    pairs, val_pairs = training_pairs(train), training_pairs(val)
    _, t_joint = _timed(train_joint, model, pairs, steps=cfg.joint_steps, log=log)
    res["joint"] = evaluate(model, val_pairs).mean_psnr

    fixed = TaskModel(TaskConfig.from_dict({**task.to_dict(), "freeze_flow": True}))
    fixed.load(start)
    _, t_fixed = _timed(train_joint, fixed, pairs, steps=cfg.joint_steps, log=log)
    res["fixed_flow"] = evaluate(fixed, val_pairs).mean_psnr
    res["seconds"] = t_flow + t_joint + t_fixed
    res["model"] = model
    return res


# -- interpolation with occlusion masks ---------------------------------------


@dataclass
class MaskToyConfig:
    count: int = 350
    n_val: int = 50
    seed: int = 11
    model_seed: int = 0
    toy: ToyParams = field(default_factory=lambda: ToyParams(speed=(4.0, 8.0)))
    channels: Tuple[int, ...] = TOY_CHANNELS
    flow_steps: int = 300
    mask_steps: int = 300
    joint_steps: int = 600


def run_mask_toy(cfg: MaskToyConfig = MaskToyConfig(), log: Log = None) -> Dict[str, float]:
    """Same pretrained flow, joint training with and without the mask network."""
    train, val = split(gen_triangle_toy(cfg.toy, count=cfg.count, seed=cfg.seed), cfg.n_val)
    base_cfg = dict(task="interpolation", flow_channels=cfg.channels, mask_channels=cfg.channels, seed=cfg.model_seed)
    base = TaskModel(TaskConfig(**base_cfg))
    pretrain_flow(base, train, steps=cfg.flow_steps, log=log)
    flow_ck = load_checkpoint(base.to_bytes())
    res: Dict[str, float] = {"gt_warp_average": gt_warp_average_psnr(val)}
    t0 = time.perf_counter()
    for use_mask in (False, True):
        m = TaskModel(TaskConfig(**base_cfg, use_mask=use_mask))
        m.load(flow_ck, groups=["flow"])
        if use_mask:
            pretrain_mask(m, train, steps=cfg.mask_steps, log=log)
        train_joint(m, training_pairs(train), steps=cfg.joint_steps, log=log)
        key = "mask" if use_mask else "no_mask"
        res[key] = evaluate(m, training_pairs(val)).mean_psnr
        res[key + "_occluded"] = occluded_psnr(m, val)
    res["seconds"] = time.perf_counter() - t0
    return res


# -- denoising on box noise ---------------------------------------------------


@dataclass
class DenoiseToyConfig:
    count: int = 500
    n_val: int = 50
    seed: int = 3
    model_seed: int = 0
    noise: BoxNoiseParams = field(default_factory=BoxNoiseParams)
    channels: Tuple[int, ...] = TOY_CHANNELS
    head_width: int = 64
    lr: float = 1e-3
    flow_steps: int = 300
    joint_steps: int = 1500


def run_denoise_toy(cfg: DenoiseToyConfig = DenoiseToyConfig(), log: Log = None) -> Dict[str, float]:
    train, val = split(gen_boxnoise_toy(cfg.noise, count=cfg.count, seed=cfg.seed), cfg.n_val)
    task = TaskConfig(task="denoising", flow_channels=cfg.channels, head_width=cfg.head_width, lr=cfg.lr, pretrain_lr=3e-4, seed=cfg.model_seed)
    model = TaskModel(task)
    t0 = time.perf_counter()
    pretrain_flow(model, train, steps=cfg.flow_steps, log=log)
    train_joint(model, training_pairs(train), steps=cfg.joint_steps, log=log)
    return {
        "noisy_input": mean_psnr([c.frames[c.ref] for c in val], val),
        "gt_warp_average": gt_warp_average_psnr(val),
        "joint": evaluate(model, training_pairs(val)).mean_psnr,
        "seconds": time.perf_counter() - t0,
        "model": model,
    }


# -- x4 super-resolution ------------------------------------------------------


@dataclass
class SRToyConfig:
    count: int = 300
    n_val: int = 30
    seed: int = 5
    model_seed: int = 5
    toy: ToyParams = field(
        default_factory=lambda: ToyParams(
            n_frames=7, speed=(1.0, 3.0), bg_speed=(1.0, 2.0), background="texture", sprite_texture=True, texture_sigma=1.5
        )
    )
    factor: int = 4
    channels: Tuple[int, ...] = TOY_CHANNELS
    head_width: int = 32
    lr: float = 3e-4
    flow_steps: int = 300
    joint_steps: int = 600


def run_sr_toy(cfg: SRToyConfig = SRToyConfig(), log: Log = None) -> Dict[str, float]:
    spec = DegradationSpec("downsample", k=cfg.factor)
    clips = [degrade(c, spec) for c in gen_triangle_toy(cfg.toy, count=cfg.count, seed=cfg.seed)]
    train, val = split(clips, cfg.n_val)
    task = TaskConfig(
        task="super-resolution", sr_factor=cfg.factor, flow_channels=cfg.channels, head_width=cfg.head_width, lr=cfg.lr, pretrain_lr=3e-4, seed=cfg.model_seed
    )
    model = TaskModel(task)
    bicubic = evaluate(model, training_pairs(val)).mean_psnr  # untrained SR model is exactly bicubic
    t0 = time.perf_counter()
    pretrain_flow(model, train, steps=cfg.flow_steps, log=log)
    train_joint(model, training_pairs(train), steps=cfg.joint_steps, log=log)
    return {"bicubic": bicubic, "joint": evaluate(model, training_pairs(val)).mean_psnr, "seconds": time.perf_counter() - t0}


# -- supervised flow pre-training ---------------------------------------------


@dataclass
class FlowToyConfig:
    count: int = 440
    n_val: int = 40
    seed: int = 13
    model_seed: int = 0
    toy: ToyParams = field(
        default_factory=lambda: ToyParams(
            size=(32, 32), sprite_size=(10, 16), speed=(1.0, 4.0), bg_speed=(1.0, 2.0), background="texture", sprite_texture=True, texture_sigma=3.0
        )
    )
    # matching texture needs the full widths; the toy widths stall near the zero-flow error
    channels: Tuple[int, ...] = (32, 64, 32, 16, 2)
    lr: float = 1e-3
    steps: int = 2000


def run_flow_toy(cfg: FlowToyConfig = FlowToyConfig(), log: Log = None) -> Dict[str, float]:
    train, val = split(gen_triangle_toy(cfg.toy, count=cfg.count, seed=cfg.seed), cfg.n_val)
    model = TaskModel(TaskConfig(task="interpolation", flow_channels=cfg.channels, pretrain_lr=cfg.lr, seed=cfg.model_seed))
    zero = flow_epe(model, val)  # untrained pyramid predicts zero flow
    _, secs = _timed(pretrain_flow, model, train, steps=cfg.steps, log=log)
    return {"zero_flow_epe": zero, "val_epe": flow_epe(model, val), "seconds": secs}
