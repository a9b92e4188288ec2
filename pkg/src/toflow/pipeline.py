"""Task models, the three training stages, inference and evaluation."""
from __future__ import annotations

import contextlib
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data.clip import VideoClip
from .errors import ConfigurationError, ShapeError
from .flownet import FlowNet, FlowPyramidConfig
from .heads import TASKS, DenoiseHead, HeadConfig, InterpHead, SRHead, bicubic_resize
from .masknet import MaskNet, MaskPyramidConfig, apply_masks
from .metrics import MetricReport, psnr, ssim
from .nn import ParamModule
from .optim import Adam
from .tensor import DEFAULT_DTYPE, Tensor, backward, l1_loss
from .warp import bilinear_warp

TASK_FRAMES = {"interpolation": 3, "denoising": 7, "deblocking": 7, "super-resolution": 7}
TASK_LR = {"interpolation": 3e-4, "denoising": 1e-4, "deblocking": 1e-4, "super-resolution": 1e-4}
FULL_CHANNELS = (32, 64, 32, 16, 2)


@dataclass
class TaskConfig:
    task: str = "interpolation"
    n_frames: Optional[int] = None
    lr: Optional[float] = None
    epochs: int = 15
    batch_size: int = 1
    weight_decay: float = 1e-4
    seed: int = 0
    use_mask: bool = False
    freeze_flow: bool = False
    steps: Optional[int] = None
    levels: int = 4
    flow_channels: Tuple[int, ...] = FULL_CHANNELS
    mask_channels: Tuple[int, ...] = FULL_CHANNELS
    head_width: int = 64
    prewarp: Optional[bool] = None
    sr_factor: int = 4
    resolution: Optional[Tuple[int, int]] = None
    pretrain_lr: Optional[float] = None
    flow_pretrain_steps: int = 2000
    flow_finetune_steps: int = 0
    mask_pretrain_steps: int = 1000
    log_every: int = 100

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"task: unknown task {self.task!r}; expected one of {TASKS}")
        if self.n_frames is None:
            self.n_frames = TASK_FRAMES[self.task]
        if self.n_frames < 3 or self.n_frames % 2 == 0:
            raise ConfigurationError(f"n_frames: must be odd and >= 3, got {self.n_frames}")
        if self.task == "interpolation" and self.n_frames != 3:
            raise ConfigurationError("n_frames: interpolation works on triplets")
        if self.lr is None:
            self.lr = TASK_LR[self.task]
        if self.pretrain_lr is None:
            self.pretrain_lr = self.lr
        if self.prewarp is None:
            # both interpolation flows see (frame1, frame3); neither is the frame being registered
            self.prewarp = self.task != "interpolation"
        if self.use_mask and self.task != "interpolation":
            raise ConfigurationError("use_mask: masks apply to interpolation only")
        if self.batch_size != 1:
            raise ConfigurationError("batch_size: only batch size 1 is supported")
        for name in ("lr", "pretrain_lr", "epochs", "head_width", "levels", "sr_factor"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name}: must be positive")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay: must be non-negative")
        if self.steps is not None and self.steps < 0:
            raise ConfigurationError("steps: must be non-negative")
        self.flow_channels = tuple(self.flow_channels)
        self.mask_channels = tuple(self.mask_channels)
        if self.resolution is not None:
            self.resolution = tuple(self.resolution)

    @property
    def ref(self) -> int:
        return self.n_frames // 2

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"{unknown[0]}: unknown config key")
        return cls(**d)


@contextlib.contextmanager
def no_grad(params: Dict[str, Tensor]) -> Iterator[None]:
    saved = {k: p.requires_grad for k, p in params.items()}
    for p in params.values():
        p.requires_grad = False
    try:
        yield
    finally:
        for k, p in params.items():
            p.requires_grad = saved[k]


class TaskModel(ParamModule):
    """Flow estimation + warping + task head, assembled per TaskConfig."""

    def __init__(self, config: TaskConfig, dtype=DEFAULT_DTYPE):
        self.config = cfg = config
        self.dtype = dtype
        fcfg = FlowPyramidConfig(levels=cfg.levels, channels=cfg.flow_channels, prewarp=cfg.prewarp)
        base = int(cfg.seed) * 100
        self.mask: Optional[MaskNet] = None
        if cfg.task == "interpolation":
            self.flow21 = FlowNet(fcfg, seed=base + 1, dtype=dtype, prefix="flow21")
            self.flow23 = FlowNet(fcfg, seed=base + 2, dtype=dtype, prefix="flow23")
            self.flow_nets = [self.flow21, self.flow23]
            if cfg.use_mask:
                mcfg = MaskPyramidConfig(levels=cfg.levels, channels=cfg.mask_channels)
                self.mask = MaskNet(mcfg, seed=base + 3, dtype=dtype, prefix="mask")
            self.head = InterpHead(HeadConfig.for_task(cfg.task, cfg.use_mask, width=cfg.head_width), seed=base + 4, dtype=dtype)
        else:
            self.flow = FlowNet(fcfg, seed=base + 1, dtype=dtype, prefix="flow")
            self.flow_nets = [self.flow]
            hcfg = HeadConfig.for_task(cfg.task, n_frames=cfg.n_frames, width=cfg.head_width)
            head_cls = SRHead if cfg.task == "super-resolution" else DenoiseHead
            self.head = head_cls(hcfg, seed=base + 4, dtype=dtype)
        self.params = {}
        for group in (self.flow_params(), self.mask_params(), self.head.params):
            self.params.update(group)

    # -- parameter groups -----------------------------------------------------

    def flow_params(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        for net in self.flow_nets:
            out.update(net.params)
        return out

    def mask_params(self) -> Dict[str, Tensor]:
        return dict(self.mask.params) if self.mask is not None else {}

    def head_params(self) -> Dict[str, Tensor]:
        return dict(self.head.params)

    def trainable_params(self) -> Dict[str, Tensor]:
        if self.config.freeze_flow:
            flow = self.flow_params()
            return {k: v for k, v in self.params.items() if k not in flow}
        return dict(self.params)

    # -- forward --------------------------------------------------------------

    def _t(self, x) -> Tensor:
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))

    def check_arity(self, frames: Sequence) -> None:
        if len(frames) != self.config.n_frames:
            raise ShapeError(f"{self.config.task} consumes {self.config.n_frames} frames, got {len(frames)}")

    def interp_parts(self, frame1, frame3) -> Dict[str, Tensor]:
        f1, f3 = self._t(frame1), self._t(frame3)
        v21 = self.flow21(f1, f3)
        v23 = self.flow23(f1, f3)
        i21 = bilinear_warp(f1, v21)
        i23 = bilinear_warp(f3, v23)
        parts = {"v21": v21, "v23": v23, "i21": i21, "i23": i23}
        if self.mask is not None:
            m21, m23 = self.mask(v21, v23)
            i21p, i23p = apply_masks(i21, i23, m21, m23)
            parts.update(m21=m21, m23=m23, i21p=i21p, i23p=i23p)
            parts["out"] = self.head(i21, i23, i21p, i23p)
        else:
            parts["out"] = self.head(i21, i23)
        return parts

    def upsample_inputs(self, frames: Sequence) -> List[Tensor]:
        k = self.config.sr_factor
        return [bicubic_resize(self._t(f), k) for f in frames]

    def register(self, frames: Sequence) -> Tuple[List[Tensor], Dict[int, Tensor]]:
        """Warp every neighbour onto the reference; the stack keeps temporal order."""
        ts = [self._t(f) for f in frames]
        ref = self.config.ref
        stack, flows = [], {}
        for j, f in enumerate(ts):
            if j == ref:
                stack.append(ts[ref])
                continue
            flows[j] = self.flow(ts[ref], f)
            stack.append(bilinear_warp(f, flows[j]))
        return stack, flows

    def forward(self, frames: Sequence) -> Tensor:
        self.check_arity(frames)
        task = self.config.task
        if task == "interpolation":
            return self.interp_parts(frames[0], frames[-1])["out"]
        if task == "super-resolution":
            up = self.upsample_inputs(frames)
            stack, _ = self.register(up)
            return self.head(stack, up[self.config.ref])
        stack, _ = self.register(frames)
        return self.head(stack)

    __call__ = forward

    # -- persistence ----------------------------------------------------------

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def to_bytes(self) -> bytes:
        return save_checkpoint(self.state_arrays(), self.config.to_dict())

    def load(self, ckpt: Checkpoint, groups: Optional[Sequence[str]] = None) -> None:
        """
        Copy tensors from a checkpoint. With `groups` (e.g. ["flow"]) only the
        named parameter groups are loaded and other stored tensors are ignored.
        """
        task = ckpt.config.get("task") if ckpt.config else None
        if task is not None and task != self.config.task:
            raise ConfigurationError(f"checkpoint was trained for {task!r}, model is {self.config.task!r}")
        if groups is None:
            ParamModule.load_arrays(self, ckpt.tensors)
            return
        wanted: Dict[str, Tensor] = {}
        for g in groups:
            wanted.update({"flow": self.flow_params, "mask": self.mask_params, "head": self.head_params}[g]())
        for name, p in wanted.items():
            if name not in ckpt.tensors:
                raise ShapeError(f"missing tensor {name!r}")
            a = ckpt.tensors[name]
            if a.shape != p.shape:
                raise ShapeError(f"tensor {name!r}: stored shape {a.shape} != model shape {p.shape}")
            p.data[...] = a

    def fingerprint(self, group: str = "all") -> str:
        params = {"all": self.params, "flow": self.flow_params(), "mask": self.mask_params(), "head": self.head_params()}[group]
        h = hashlib.sha256()
        for name in sorted(params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(params[name].data).tobytes())
        return h.hexdigest()


def model_from_checkpoint(ckpt: Checkpoint, **overrides) -> TaskModel:
    cfg = TaskConfig.from_dict({**ckpt.config, **overrides})
    model = TaskModel(cfg)
    model.load(ckpt)
    return model


# ---------------------------------------------------------------------------
# what a task consumes and is scored against
# ---------------------------------------------------------------------------


def clip_inputs(clip: VideoClip) -> List[np.ndarray]:
    return list(clip.frames)


def clip_target(clip: VideoClip) -> np.ndarray:
    return clip.target


def training_pairs(corpus: Sequence[VideoClip]) -> List[Tuple[List[np.ndarray], np.ndarray]]:
    """(input frames, target frame) only -- joint training never sees flow labels."""
    return [(clip_inputs(c), clip_target(c)) for c in corpus]


def _epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch, 0x70F]).permutation(n)


def _schedule(n: int, config: TaskConfig, steps: Optional[int]) -> Iterator[Tuple[int, int, int]]:
    """Yield (step, epoch, index) for `steps` steps, or `epochs` passes when steps is None."""
    if n == 0:
        raise ValueError("empty corpus")
    total = steps if steps is not None else config.epochs * n
    step, epoch = 0, 0
    while step < total:
        for idx in _epoch_order(n, config.seed, epoch):
            if step >= total:
                return
            yield step, epoch, int(idx)
            step += 1
        epoch += 1


# ---------------------------------------------------------------------------
# stage 1: flow pre-training
# ---------------------------------------------------------------------------


def _flow_frames(model: TaskModel, clip: VideoClip, degraded: bool) -> List[np.ndarray]:
    if model.config.task == "interpolation":
        return list(clip.frames)
    if degraded or clip.clean is None:
        frames = list(clip.frames)
    else:
        frames = list(clip.clean)
    if model.config.task == "super-resolution" and frames[0].shape != clip.target.shape:
        frames = [f.data for f in model.upsample_inputs(frames)]
    return frames


def pretrain_flow(
    model: TaskModel,
    corpus: Sequence[VideoClip],
    config: Optional[TaskConfig] = None,
    steps: Optional[int] = None,
    degraded: bool = False,
    lr: Optional[float] = None,
    log: Optional[Callable[[dict], None]] = None,
) -> List[float]:
    """
    Fit the flow networks to ground-truth flow with an L1 loss.

    Interpolation supervises both v21 and v23 from (frame1, frame3). Other
    tasks supervise the shared network on one random neighbour per step;
    `degraded=True` feeds the noisy / low-resolution frames instead of the
    clean ones (the fine-tuning phase).
    """
    config = config or model.config
    if any(c.flows is None for c in corpus):
        raise ValueError("flow pre-training needs clips with ground-truth flow")
    steps = config.flow_pretrain_steps if steps is None else steps
    opt = Adam(model.flow_params(), lr=lr or config.pretrain_lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng([config.seed, 0xF10])
    losses = []
    for step, _, idx in _schedule(len(corpus), config, steps):
        clip = corpus[idx]
        frames = _flow_frames(model, clip, degraded)
        opt.zero_grad()
        if model.config.task == "interpolation":
            f1, f3 = model._t(frames[0]), model._t(frames[-1])
            gt21, gt23 = clip.flows[0], clip.flows[len(frames) - 1]
            loss = (l1_loss(model.flow21(f1, f3), model._t(gt21)) + l1_loss(model.flow23(f1, f3), model._t(gt23))) * 0.5
        else:
            ref = clip.ref
            others = [j for j in range(len(frames)) if j != ref]
            j = others[int(rng.integers(len(others)))]
            pred = model.flow(model._t(frames[ref]), model._t(frames[j]))
            loss = l1_loss(pred, model._t(clip.flows[j]))
        backward(loss)
        opt.step()
        losses.append(loss.item())
        if log is not None and (step + 1) % config.log_every == 0:
            log({"stage": "flow", "step": step + 1, "loss": float(np.mean(losses[-config.log_every :]))})
    return losses


def flow_epe(model: TaskModel, corpus: Sequence[VideoClip], degraded: bool = False) -> float:
    """Mean end-point error (px) of the flow networks against ground truth."""
    errs = []
    with no_grad(model.params):
        for clip in corpus:
            frames = _flow_frames(model, clip, degraded)
            if model.config.task == "interpolation":
                v21, v23 = model.flow21(frames[0], frames[-1]), model.flow23(frames[0], frames[-1])
                pairs = [(v21, clip.flows[0]), (v23, clip.flows[len(frames) - 1])]
            else:
                pairs = [(model.flow(frames[clip.ref], frames[j]), f) for j, f in clip.flows.items()]
            for pred, gt in pairs:
                errs.append(np.sqrt(((pred.data - gt) ** 2).sum(axis=0)).mean())
    return float(np.mean(errs))


# ---------------------------------------------------------------------------
# stage 2: mask pre-training
# ---------------------------------------------------------------------------


def pretrain_mask(
    model: TaskModel,
    corpus: Sequence[VideoClip],
    config: Optional[TaskConfig] = None,
    steps: Optional[int] = None,
    lr: Optional[float] = None,
    log: Optional[Callable[[dict], None]] = None,
) -> List[float]:
    """Fit the mask pyramid to oracle masks, using flows from the frozen flow networks."""
    config = config or model.config
    if model.mask is None:
        raise ConfigurationError("use_mask: model has no mask network")
    if any(c.masks is None for c in corpus):
        raise ValueError("mask pre-training needs clips with oracle masks")
    steps = config.mask_pretrain_steps if steps is None else steps
    opt = Adam(model.mask_params(), lr=lr or config.pretrain_lr, weight_decay=config.weight_decay)
    losses = []
    for step, _, idx in _schedule(len(corpus), config, steps):
        clip = corpus[idx]
        with no_grad(model.flow_params()):
            v21 = model.flow21(clip.frames[0], clip.frames[-1])
            v23 = model.flow23(clip.frames[0], clip.frames[-1])
        opt.zero_grad()
        m21, m23 = model.mask(v21, v23)
        loss = (l1_loss(m21, model._t(clip.masks[0])) + l1_loss(m23, model._t(clip.masks[clip.n - 1]))) * 0.5
        backward(loss)
        opt.step()
        losses.append(loss.item())
        if log is not None and (step + 1) % config.log_every == 0:
            log({"stage": "mask", "step": step + 1, "loss": float(np.mean(losses[-config.log_every :]))})
    return losses


def mask_mae(model: TaskModel, corpus: Sequence[VideoClip]) -> float:
    errs = []
    with no_grad(model.params):
        for clip in corpus:
            parts = model.interp_parts(clip.frames[0], clip.frames[-1])
            errs.append(np.abs(parts["m21"].data - clip.masks[0]).mean())
            errs.append(np.abs(parts["m23"].data - clip.masks[clip.n - 1]).mean())
    return float(np.mean(errs))


# ---------------------------------------------------------------------------
# stage 3: joint training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint: bytes
    losses: List[float] = field(default_factory=list)
    log: List[dict] = field(default_factory=list)

    def metrics_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.log)


def evaluate(model: TaskModel, pairs: Sequence[Tuple[Sequence[np.ndarray], np.ndarray]], ids: Optional[Sequence[str]] = None) -> MetricReport:
    report = MetricReport()
    with no_grad(model.params):
        for i, (frames, target) in enumerate(pairs):
            out = model(frames).data
            report.add(ids[i] if ids else f"{i:05d}", np.clip(out, 0.0, 1.0), target)
    return report


def train_joint(
    model: TaskModel,
    pairs: Sequence[Tuple[Sequence[np.ndarray], np.ndarray]],
    config: Optional[TaskConfig] = None,
    steps: Optional[int] = None,
    val_pairs: Optional[Sequence[Tuple[Sequence[np.ndarray], np.ndarray]]] = None,
    log: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """
    Minimise the L1 error of the task output. Every parameter group trains
    unless `freeze_flow` is set (the fixed-flow ablation). Only (frames,
    target) pairs reach this loop.
    """
    config = config or model.config
    if config.task != model.config.task:
        raise ConfigurationError(f"task: config is {config.task!r} but model is {model.config.task!r}")
    steps = config.steps if steps is None else steps
    trainable = model.trainable_params()
    frozen = {k: v for k, v in model.params.items() if k not in trainable}
    opt = Adam(trainable, lr=config.lr, weight_decay=config.weight_decay)
    result = TrainResult(b"")
    window: List[float] = []

    def _emit(step: int, epoch: int) -> None:
        entry = {"step": step, "epoch": epoch, "loss": float(np.mean(window)) if window else float("nan")}
        if val_pairs:
            rep = evaluate(model, val_pairs)
            entry.update(psnr=rep.mean_psnr, ssim=rep.mean_ssim)
        else:
            entry.update(psnr=float("nan"), ssim=float("nan"))
        result.log.append(entry)
        if log is not None:
            log(entry)

    last_epoch = 0
    with no_grad(frozen):
        for step, epoch, idx in _schedule(len(pairs), config, steps):
            if epoch != last_epoch:
                _emit(step, last_epoch)
                window = []
                last_epoch = epoch
            frames, target = pairs[idx]
            opt.zero_grad()
            loss = l1_loss(model(frames), model._t(target))
            backward(loss)
            opt.step()
            result.losses.append(loss.item())
            window.append(loss.item())
            if config.log_every and (step + 1) % config.log_every == 0 and log is not None:
                log({"step": step + 1, "epoch": epoch, "loss": float(np.mean(window[-config.log_every :]))})
    _emit(len(result.losses), last_epoch)
    result.checkpoint = model.to_bytes()
    return result


def infer(model: TaskModel, clip) -> np.ndarray:
    """Single output frame for a clip (VideoClip or frame list)."""
    frames = clip_inputs(clip) if isinstance(clip, VideoClip) else list(clip)
    model.check_arity(frames)
    with no_grad(model.params):
        return model(frames).data.copy()


def warp_average_baseline(clip: VideoClip, flows: Optional[Dict[int, np.ndarray]] = None) -> np.ndarray:
    """
    Register every non-reference input with ground-truth flow and average.

    For interpolation the average is over the two warped outer frames (the
    middle frame is the unknown); otherwise the reference frame joins the
    average.
    """
    flows = flows if flows is not None else clip.flows
    warped = [
        bilinear_warp(Tensor(np.asarray(clip.frames[j], np.float64)), Tensor(np.asarray(f, np.float64))).data
        for j, f in sorted(flows.items())
    ]
    if clip.n != 3:
        warped.append(np.asarray(clip.frames[clip.ref], np.float64))
    return np.mean(warped, axis=0)
