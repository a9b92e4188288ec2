"""
Finite-difference gradient suite over every differentiable op and every
assembled task model (float64, small inputs, 2-level pyramids).

Each case builds a fresh scalar closure and the tensors to perturb. Inputs
are kept away from kinks (relu at 0, |.| at 0, integer warp sample points)
so central differences are meaningful.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .flownet import FlowNet, FlowPyramidConfig, flow_subnet, pad_to_multiple, pyramid_down
from .gradcheck import GradCheckResult, check_joint, probe_weights, weighted_sum
from .heads import DenoiseHead, HeadConfig, InterpHead, SRHead, bicubic_resize
from .masknet import MaskNet, MaskPyramidConfig, apply_masks
from .nn import ConvStack, randomize
from .pipeline import TaskConfig, TaskModel
from .tensor import (
    Tensor,
    concat,
    conv2d,
    l1_loss,
    mean_all,
    narrow,
    relu,
    resize_bilinear,
    sigmoid,
    spatial_norm,
    sum_all,
)
from .warp import bilinear_warp

F64 = np.float64
Case = Tuple[Callable[[], Tensor], Dict[str, Tensor]]


def _leaf(a) -> Tensor:
    return Tensor(np.asarray(a, dtype=F64), requires_grad=True)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def _smooth(rng, shape, sigma=1.5):
    return gaussian_filter(rng.random(shape), (0,) + (sigma,) * (len(shape) - 1))


def _probe(out_shape, seed=1):
    return probe_weights(out_shape, seed)


def _op_add(rng) -> Case:
    a, b = _leaf(rng.normal(size=(2, 3, 4))), _leaf(rng.normal(size=(1, 3, 1)))
    w = _probe((2, 3, 4))
    return (lambda: weighted_sum(a + b - a * 0.5, w)), {"a": a, "b": b}


def _op_mul(rng) -> Case:
    a, b = _leaf(rng.normal(size=(2, 4, 4))), _leaf(rng.normal(size=(1, 4, 4)))
    w = _probe((2, 4, 4))
    return (lambda: weighted_sum(-(a * b), w)), {"a": a, "b": b}


def _op_relu(rng) -> Case:
    x = _leaf(_away_from_zero(rng, (3, 5, 5)))
    w = _probe((3, 5, 5))
    return (lambda: weighted_sum(relu(x), w)), {"x": x}


def _op_sigmoid(rng) -> Case:
    x = _leaf(rng.normal(scale=3.0, size=(2, 5, 5)))
    w = _probe((2, 5, 5))
    return (lambda: weighted_sum(sigmoid(x), w)), {"x": x}


def _op_reductions(rng) -> Case:
    x = _leaf(rng.normal(size=(2, 4, 4)))
    w = _probe((2, 4, 4))
    return (lambda: sum_all(x * Tensor(w)) * mean_all(x * x)), {"x": x}


def _op_concat_narrow(rng) -> Case:
    a, b = _leaf(rng.normal(size=(2, 4, 4))), _leaf(rng.normal(size=(3, 4, 4)))
    w = _probe((3, 3, 4))
    return (lambda: weighted_sum(narrow(narrow(concat([a, b]), 1, 4), 1, 4, axis=1), w)), {"a": a, "b": b}


def _op_conv(cin, cout, k) -> Callable[[np.random.Generator], Case]:
    def build(rng) -> Case:
        x = _leaf(rng.normal(size=(cin, 6, 6)))
        wt = _leaf(rng.normal(size=(cout, cin, k, k)))
        b = _leaf(rng.normal(size=(cout,)))
        w = _probe((cout, 6, 6))
        return (lambda: weighted_sum(conv2d(x, wt, b), w)), {"x": x, "weight": wt, "bias": b}

    return build


def _op_conv_valid(rng) -> Case:
    x = _leaf(rng.normal(size=(2, 7, 6)))
    wt = _leaf(rng.normal(size=(3, 2, 3, 3)))
    w = _probe((3, 5, 4))
    return (lambda: weighted_sum(conv2d(x, wt, None, padding=0), w)), {"x": x, "weight": wt}


def _op_spatial_norm(rng) -> Case:
    x = _leaf(rng.normal(size=(3, 5, 5)))
    g, b = _leaf(rng.normal(size=3)), _leaf(rng.normal(size=3))
    w = _probe((3, 5, 5))
    return (lambda: weighted_sum(spatial_norm(x, g, b), w)), {"x": x, "gamma": g, "beta": b}


def _op_resize(rng) -> Case:
    x = _leaf(rng.normal(size=(2, 6, 8)))
    w1, w2 = _probe((2, 12, 16)), _probe((2, 3, 4), seed=2)
    return (lambda: weighted_sum(resize_bilinear(x, 2.0), w1) + weighted_sum(resize_bilinear(x, 0.5), w2)), {"x": x}


def _op_pyramid_pad(rng) -> Case:
    x = _leaf(rng.normal(size=(2, 7, 5)))
    w = _probe((2, 4, 4))
    return (lambda: weighted_sum(pyramid_down(pad_to_multiple(x, 4)), w)), {"x": x}


def _op_bicubic(rng) -> Case:
    x = _leaf(rng.normal(size=(3, 8, 8)))
    w1, w2 = _probe((3, 32, 32)), _probe((3, 2, 2), seed=2)
    return (lambda: weighted_sum(bicubic_resize(x, 4), w1) + weighted_sum(bicubic_resize(x, 0.25), w2)), {"x": x}


def _op_warp(rng) -> Case:
    img = _leaf(rng.random((3, 8, 8)))
    # integer part plus a fraction in [0.2, 0.8]: sample points never land on the grid
    whole = rng.integers(-2, 3, size=(2, 8, 8))
    fl = _leaf(whole + rng.uniform(0.2, 0.8, size=(2, 8, 8)))
    w = _probe((3, 8, 8))
    return (lambda: weighted_sum(bilinear_warp(img, fl), w)), {"image": img, "flow": fl}


def _op_l1(rng) -> Case:
    p = _leaf(rng.normal(size=(3, 4, 4)))
    t = _leaf(p.data + _away_from_zero(rng, (3, 4, 4)))
    return (lambda: l1_loss(p, t)), {"pred": p, "target": t}


def _op_flow_subnet(rng) -> Case:
    stack = ConvStack("s", 8, (6, 2), (3, 3), rng, norm=True, dtype=F64)
    randomize(stack.params, rng, 0.1)
    ref, other = _leaf(_smooth(rng, (3, 8, 8))), _leaf(_smooth(rng, (3, 8, 8)))
    up = _leaf(rng.uniform(-1.5, 1.5, size=(2, 8, 8)))
    w = _probe((2, 8, 8))
    tensors = {"ref": ref, "other": other, "up_flow": up, **stack.params}
    return (lambda: weighted_sum(flow_subnet(ref, other, up, stack, prewarp=True), w)), tensors


def _op_flow_net(rng) -> Case:
    net = FlowNet(FlowPyramidConfig(levels=2, channels=(6, 2), kernel=3), seed=3, dtype=F64)
    randomize(net.params, rng, 0.1)
    a, b = _leaf(_smooth(rng, (3, 8, 8))), _leaf(_smooth(rng, (3, 8, 8)))
    w = _probe((2, 8, 8))
    return (lambda: weighted_sum(net(a, b), w)), {"frame_a": a, "frame_b": b, **net.params}


def _op_mask_net(rng) -> Case:
    net = MaskNet(MaskPyramidConfig(levels=2, channels=(6, 2), kernel=3), seed=4, dtype=F64)
    randomize(net.params, rng, 0.1)
    v21, v23 = _leaf(rng.normal(size=(2, 8, 8))), _leaf(rng.normal(size=(2, 8, 8)))
    i21, i23 = _leaf(rng.random((3, 8, 8))), _leaf(rng.random((3, 8, 8)))
    w1, w2 = _probe((3, 8, 8)), _probe((3, 8, 8), seed=2)

    def fn():
        m21, m23 = net(v21, v23)
        a, b = apply_masks(i21, i23, m21, m23)
        return weighted_sum(a, w1) + weighted_sum(b, w2)

    return fn, {"v21": v21, "v23": v23, "i21": i21, "i23": i23, **net.params}


def _op_heads(rng) -> Case:
    interp = InterpHead(HeadConfig("interpolation", True, 3, (5, 5, 3), (3, 1, 1)), seed=1, dtype=F64)
    den = DenoiseHead(HeadConfig("denoising", False, 3, (5, 5, 3), (3, 1, 1)), seed=2, dtype=F64)
    sr = SRHead(HeadConfig("super-resolution", False, 3, (5, 5, 5, 3), (3, 3, 1, 1)), seed=3, dtype=F64)
    for h in (interp, den, sr):
        randomize(h.params, rng, 0.1)
    fr = [_leaf(_smooth(rng, (3, 8, 8))) for _ in range(4)]
    w = _probe((3, 8, 8))
    tensors = {f"frame{i}": f for i, f in enumerate(fr)}
    for prefix, h in (("interp", interp), ("denoise", den), ("sr", sr)):
        tensors.update({f"{prefix}.{k}": v for k, v in h.params.items()})

    def fn():
        out = interp(fr[0], fr[1], fr[2], fr[3]) + den(fr[:3]) + sr(fr[1:], fr[0])
        return weighted_sum(out, w)

    return fn, tensors


OP_CASES: Dict[str, Callable[[np.random.Generator], Case]] = {
    "add_sub_broadcast": _op_add,
    "mul_neg_broadcast": _op_mul,
    "relu": _op_relu,
    "sigmoid": _op_sigmoid,
    "sum_mean": _op_reductions,
    "concat_narrow": _op_concat_narrow,
    "conv2d_3x3_expand": _op_conv(2, 3, 3),
    "conv2d_3x3_reduce": _op_conv(3, 2, 3),
    "conv2d_1x1": _op_conv(3, 4, 1),
    "conv2d_valid": _op_conv_valid,
    "spatial_norm": _op_spatial_norm,
    "resize_bilinear": _op_resize,
    "pyramid_down_pad": _op_pyramid_pad,
    "bicubic_resize": _op_bicubic,
    "bilinear_warp": _op_warp,
    "l1_loss": _op_l1,
    "flow_subnet": _op_flow_subnet,
    "flow_net_2level": _op_flow_net,
    "mask_net_apply": _op_mask_net,
    "heads": _op_heads,
}

MODEL_CASES = {
    "interpolation": dict(task="interpolation"),
    "interpolation_mask": dict(task="interpolation", use_mask=True),
    "denoising": dict(task="denoising"),
    "super-resolution": dict(task="super-resolution"),
}


def model_case(name: str, seed: int = 0, size: int = 16) -> Case:
    """A full task model (2-level pyramid, default widths) on smooth size x size inputs."""
    cfg = TaskConfig(levels=2, **MODEL_CASES[name])
    model = TaskModel(cfg, dtype=F64)
    rng = np.random.default_rng(seed)
    randomize(model.params, rng, scale=0.05)
    side = size // cfg.sr_factor if cfg.task == "super-resolution" else size
    frames = [_smooth(rng, (3, side, side)) for _ in range(cfg.n_frames)]
    w = _probe((3, size, size))
    return (lambda: weighted_sum(model(frames), w)), model.params


@dataclass
class SuiteEntry:
    name: str
    result: GradCheckResult
    seconds: float


def run_suite(
    samples: int = 100, h: float = 1e-5, retry_h: float = 1e-6, seed: int = 0, models: bool = True
) -> List[SuiteEntry]:
    """
    Run every case with step `h`. Assembled models hold many relu kinks, so a
    sample that disagrees there is re-measured with the narrower `retry_h`.
    """
    out = []
    cases = [(f"op:{n}", None, lambda b=b: b(np.random.default_rng(seed))) for n, b in OP_CASES.items()]
    if models:
        cases += [(f"model:{n}", retry_h, lambda n=n: model_case(n, seed)) for n in MODEL_CASES]
    for name, retry, build in cases:
        t0 = time.perf_counter()
        fn, tensors = build()
        res = check_joint(fn, tensors, samples=samples, h=h, seed=seed, retry_h=retry)
        out.append(SuiteEntry(name, res, time.perf_counter() - t0))
    return out
