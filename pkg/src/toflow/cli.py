"""
Command-line entry point.

    toflow gen-toy --task interpolation --count 200 --seed 7 --out d/
    toflow pretrain-flow --config run.json --in d/ --out ck/
    toflow train --config run.json --checkpoint ck/checkpoint.tofw --in d/ --out run/
    toflow eval --checkpoint run/checkpoint.tofw --in d/ --out r/

Configs are JSON objects holding TaskConfig fields plus the run fields of
RunConfig. Flags override file values. Validation happens before anything
is written; a bad config exits with status 2 and a message that starts with
the offending field, any later failure exits with status 1.
"""
from __future__ import annotations

import argparse
import json
import sys
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import pipeline
from .checkpoint import load_checkpoint
from .data import io as dio
from .data.clip import VideoClip
from .data.degrade import DegradationSpec, degrade
from .data.filters import filter_interp_triplet, filter_septuplet, flow_histogram
from .data.toys import BoxNoiseParams, ToyParams, clip_rng, gen_boxnoise_toy, gen_triangle_toy
from .errors import ConfigurationError
from .pipeline import TaskConfig, TaskModel, no_grad

COMMANDS = ("gen-toy", "degrade", "filter", "pretrain-flow", "pretrain-mask", "train", "infer", "eval", "flow-stats")
CHECKPOINT_NAME = "checkpoint.tofw"

# which RunConfig fields each command cannot run without
REQUIRED = {
    "gen-toy": ("out",),
    "degrade": ("corpus", "out"),
    "filter": ("corpus", "out"),
    "pretrain-flow": ("corpus", "out"),
    "pretrain-mask": ("corpus", "checkpoint", "out"),
    "train": ("corpus", "out"),
    "infer": ("corpus", "checkpoint", "out"),
    "eval": ("corpus", "checkpoint", "out"),
    "flow-stats": ("corpus", "out"),
}


@dataclass
class RunConfig:
    corpus: Optional[str] = None
    out: Optional[str] = None
    checkpoint: Optional[str] = None
    train_split: str = "train"
    val_split: str = "val"
    count: int = 100
    val_fraction: float = 0.1
    toy: Dict[str, object] = field(default_factory=dict)
    degradation: Dict[str, object] = field(default_factory=dict)
    task_config: Dict[str, object] = field(default_factory=dict)

    def task(self) -> TaskConfig:
        return TaskConfig.from_dict(self.task_config)


RUN_FIELDS = {f.name for f in fields(RunConfig)} - {"task_config"}
TASK_FIELDS = {f.name for f in fields(TaskConfig)}


def _type_ok(value, hint) -> bool:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if hint is typing.Any:
        return True
    if origin is typing.Union:
        return any(_type_ok(value, a) for a in args)
    if hint is type(None):
        return value is None
    if origin in (tuple, list) or hint in (tuple, list):
        return isinstance(value, list) and all(_type_ok(v, args[0]) for v in value) if args else isinstance(value, list)
    if origin is dict or hint is dict:
        return isinstance(value, dict)
    if hint is bool:
        return isinstance(value, bool)
    if hint is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if hint is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if hint is str:
        return isinstance(value, str)
    return True


def _check_types(cls, values: dict) -> None:
    hints = typing.get_type_hints(cls)
    for k, v in values.items():
        if k in hints and not _type_ok(v, hints[k]):
            raise ConfigurationError(f"{k}: expected {hints[k]}, got {json.dumps(v)}")


def build_config(doc: dict, overrides: dict, command: str) -> RunConfig:
    """Split a flat JSON document into run and task fields, apply flag overrides, validate."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config: top level must be a JSON object")
    merged = dict(doc)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(merged) - RUN_FIELDS - TASK_FIELDS)
    if unknown:
        raise ConfigurationError(f"{unknown[0]}: unknown config key")
    run_part = {k: v for k, v in merged.items() if k in RUN_FIELDS}
    task_part = {k: v for k, v in merged.items() if k in TASK_FIELDS}
    _check_types(RunConfig, run_part)
    _check_types(TaskConfig, task_part)
    cfg = RunConfig(**run_part, task_config=task_part)
    cfg.task()  # raises on invalid task fields
    for name in REQUIRED[command]:
        if getattr(cfg, name) is None:
            raise ConfigurationError(f"{name}: required by {command}")
    if cfg.count < 1:
        raise ConfigurationError("count: must be positive")
    if not 0.0 <= cfg.val_fraction < 1.0:
        raise ConfigurationError("val_fraction: must lie in [0, 1)")
    for key, cls in (("toy", ToyParams), ("degradation", DegradationSpec)):
        sub = getattr(cfg, key)
        known = {f.name for f in fields(cls)}
        bad = sorted(set(sub) - known)
        if bad:
            raise ConfigurationError(f"{key}.{bad[0]}: unknown config key")
        try:
            cls(**sub)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{key}: {exc}") from None
    return cfg


def effective_config(cfg: RunConfig) -> dict:
    # the output directory is left out so the same run lands byte-identical anywhere
    d = {k: v for k, v in asdict(cfg).items() if k not in ("task_config", "out")}
    d.update(cfg.task().to_dict())
    return d


# ---------------------------------------------------------------------------
# corpus helpers
# ---------------------------------------------------------------------------


def load_clips(path: str, split: str) -> List[VideoClip]:
    """A corpus root (uses `split`) or a directory holding clip folders directly."""
    root = Path(path)
    if (root / split).is_dir():
        return dio.load_corpus(root, split)
    clips = [dio.load_clip(p) for p in sorted(root.iterdir()) if (p / "meta.json").is_file()]
    if not clips:
        raise FileNotFoundError(f"no clips under {root} (looked for split {split!r} and clip folders)")
    return clips


def _splits(path: str) -> List[str]:
    root = Path(path)
    return sorted(p.name for p in root.iterdir() if p.is_dir() and not (p / "meta.json").exists())


def default_toy(task: TaskConfig, overrides: dict):
    if task.task == "interpolation":
        return ToyParams(**overrides)
    if task.task == "denoising":
        toy = {"n_frames": 7, "speed": [1.0, 3.0], "background": "texture", **overrides}
        return BoxNoiseParams(toy=ToyParams(**toy))
    return ToyParams(**{"n_frames": task.n_frames, "speed": [1.0, 3.0], "background": "texture", **overrides})


def default_degradation(task: TaskConfig, overrides: dict) -> Optional[DegradationSpec]:
    kind = {"deblocking": "blocky", "super-resolution": "downsample"}.get(task.task)
    if kind is None and not overrides:
        return None
    spec = {"kind": kind or "gaussian", **overrides}
    if task.task == "super-resolution":
        spec.setdefault("k", task.sr_factor)
    return DegradationSpec(**spec)


def generate(cfg: RunConfig, seed: int) -> Dict[str, List[VideoClip]]:
    task = cfg.task()
    n_val = int(round(cfg.count * cfg.val_fraction))
    n_train = cfg.count - n_val
    params = default_toy(task, dict(cfg.toy))
    gen = gen_boxnoise_toy if isinstance(params, BoxNoiseParams) else gen_triangle_toy
    spec = default_degradation(task, dict(cfg.degradation))
    out = {}
    for split, start, n in ((cfg.train_split, 0, n_train), (cfg.val_split, n_train, n_val)):
        clips = gen(params, count=n, seed=seed, start=start) if n else []
        if spec is not None:
            clips = [degrade(c, spec, rng=clip_rng(seed + 1, start + i)) for i, c in enumerate(clips)]
        out[split] = clips
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def _load_model(cfg: RunConfig, check_task: bool = True) -> TaskModel:
    ck = load_checkpoint(Path(cfg.checkpoint).read_bytes())
    stored = ck.config.get("task")
    wanted = cfg.task_config.get("task")
    if check_task and wanted is not None and stored is not None and wanted != stored:
        raise ConfigurationError(f"task: checkpoint was trained for {stored!r}, asked for {wanted!r}")
    return pipeline.model_from_checkpoint(ck)


def _model_for_training(cfg: RunConfig):
    """Fresh model for the config, seeded from every checkpoint group whose tensors fit."""
    model = TaskModel(cfg.task())
    loaded: List[str] = []
    if cfg.checkpoint:
        ck = load_checkpoint(Path(cfg.checkpoint).read_bytes())
        stored = ck.config.get("task")
        if stored is not None and stored != model.config.task:
            raise ConfigurationError(f"task: checkpoint was trained for {stored!r}, config says {model.config.task!r}")
        groups = {"flow": model.flow_params(), "mask": model.mask_params(), "head": model.head_params()}
        for g, params in groups.items():
            # a head grows when a mask joins, so an earlier stage's head may not fit
            if params and all(k in ck.tensors and ck.tensors[k].shape == p.shape for k, p in params.items()):
                loaded.append(g)
        if "flow" not in loaded:
            raise ValueError(f"checkpoint {cfg.checkpoint} holds no compatible flow network")
        model.load(ck, groups=loaded)
    return model, loaded


def cmd_gen_toy(cfg: RunConfig, seed: int, out: Path) -> None:
    for split, clips in generate(cfg, seed).items():
        dio.save_corpus(clips, out, split)


def cmd_degrade(cfg: RunConfig, seed: int, out: Path) -> None:
    task = cfg.task()
    spec = default_degradation(task, dict(cfg.degradation)) or DegradationSpec()
    for split in _splits(cfg.corpus):
        clips = dio.load_corpus(cfg.corpus, split)
        dio.save_corpus([degrade(c, spec, rng=clip_rng(seed, i)) for i, c in enumerate(clips)], out, split)


def _estimated_flows(model: Optional[TaskModel], clip: VideoClip) -> Dict[int, np.ndarray]:
    if model is None:
        if clip.flows is None:
            raise ValueError(f"clip {clip.clip_id} has no ground-truth flow; pass --checkpoint to estimate it")
        return clip.flows
    with no_grad(model.params):
        if model.config.task == "interpolation":
            return {0: model.flow21(clip.frames[0], clip.frames[-1]).data, clip.n - 1: model.flow23(clip.frames[0], clip.frames[-1]).data}
        return {j: model.flow(clip.frames[clip.ref], clip.frames[j]).data for j in range(clip.n) if j != clip.ref}


def cmd_filter(cfg: RunConfig, seed: int, out: Path) -> None:
    model = _load_model(cfg) if cfg.checkpoint else None
    rows = []
    for split in _splits(cfg.corpus) or [cfg.train_split]:
        for clip in load_clips(cfg.corpus, split):
            flows = _estimated_flows(model, clip)
            if clip.n == 3:
                res = filter_interp_triplet(clip.frames, flows[0], flows[2])
            else:
                res = filter_septuplet(clip.frames, flows, ref=clip.ref)
            rows.append({"split": split, "clip": clip.clip_id, "accepted": res.accepted, "reasons": res.reasons, "stats": res.stats})
    _write_jsonl(out / "filter.jsonl", rows)
    _write_json(out / "summary.json", {"count": len(rows), "accepted": sum(r["accepted"] for r in rows)})


def cmd_pretrain_flow(cfg: RunConfig, seed: int, out: Path) -> None:
    model, loaded = _model_for_training(cfg)
    task = model.config
    corpus = dio.load_corpus(cfg.corpus, cfg.train_split)
    rows: list = []
    pipeline.pretrain_flow(model, corpus, steps=task.flow_pretrain_steps, log=rows.append)
    if task.flow_finetune_steps and task.task != "interpolation":
        pipeline.pretrain_flow(model, corpus, steps=task.flow_finetune_steps, degraded=True, log=rows.append)
    summary = {"initialised_from": loaded}
    if (Path(cfg.corpus) / cfg.val_split).is_dir():
        summary["val_epe"] = pipeline.flow_epe(model, dio.load_corpus(cfg.corpus, cfg.val_split), degraded=True)
    (out / CHECKPOINT_NAME).write_bytes(model.to_bytes())
    _write_jsonl(out / "log.jsonl", rows)
    _write_json(out / "summary.json", summary)


def cmd_pretrain_mask(cfg: RunConfig, seed: int, out: Path) -> None:
    task = cfg.task()
    if task.task != "interpolation" or not task.use_mask:
        raise ConfigurationError("use_mask: mask pre-training needs an interpolation config with use_mask = true")
    model, loaded = _model_for_training(cfg)
    corpus = dio.load_corpus(cfg.corpus, cfg.train_split)
    rows: list = []
    pipeline.pretrain_mask(model, corpus, steps=task.mask_pretrain_steps, log=rows.append)
    summary = {"initialised_from": loaded}
    if (Path(cfg.corpus) / cfg.val_split).is_dir():
        summary["val_mask_mae"] = pipeline.mask_mae(model, dio.load_corpus(cfg.corpus, cfg.val_split))
    (out / CHECKPOINT_NAME).write_bytes(model.to_bytes())
    _write_jsonl(out / "log.jsonl", rows)
    _write_json(out / "summary.json", summary)


def cmd_train(cfg: RunConfig, seed: int, out: Path) -> None:
    model, loaded = _model_for_training(cfg)
    train = dio.load_corpus(cfg.corpus, cfg.train_split)
    val = dio.load_corpus(cfg.corpus, cfg.val_split) if (Path(cfg.corpus) / cfg.val_split).is_dir() else []
    result = pipeline.train_joint(model, pipeline.training_pairs(train), val_pairs=pipeline.training_pairs(val) or None)
    (out / CHECKPOINT_NAME).write_bytes(result.checkpoint)
    (out / "train_log.jsonl").write_text(result.metrics_jsonl())
    if val:
        report = pipeline.evaluate(model, pipeline.training_pairs(val), ids=[c.clip_id for c in val])
        (out / "metrics.jsonl").write_text(report.jsonl())
        summary = report.summary()
    else:
        summary = {}
    _write_json(out / "summary.json", {"initialised_from": loaded, **summary})


def cmd_infer(cfg: RunConfig, seed: int, out: Path) -> None:
    model = _load_model(cfg)
    for clip in load_clips(cfg.corpus, cfg.val_split):
        dio.write_png(out / f"{clip.clip_id}.png", np.clip(pipeline.infer(model, clip), 0.0, 1.0))


def cmd_eval(cfg: RunConfig, seed: int, out: Path) -> None:
    model = _load_model(cfg)
    clips = load_clips(cfg.corpus, cfg.val_split)
    report = pipeline.evaluate(model, pipeline.training_pairs(clips), ids=[c.clip_id for c in clips])
    (out / "metrics.jsonl").write_text(report.jsonl())
    _write_json(out / "summary.json", report.summary())


def cmd_flow_stats(cfg: RunConfig, seed: int, out: Path) -> None:
    model = _load_model(cfg) if cfg.checkpoint else None
    flows, ids = [], []
    for split in _splits(cfg.corpus) or [cfg.train_split]:
        for clip in load_clips(cfg.corpus, split):
            for j, f in sorted(_estimated_flows(model, clip).items()):
                flows.append(f)
                ids.append(f"{split}/{clip.clip_id}/{clip.ref + 1}{j + 1}")
    hist = flow_histogram(flows)
    _write_json(out / "flow_stats.json", {"flows": ids, **hist.to_dict()})


HANDLERS = {
    "gen-toy": cmd_gen_toy,
    "degrade": cmd_degrade,
    "filter": cmd_filter,
    "pretrain-flow": cmd_pretrain_flow,
    "pretrain-mask": cmd_pretrain_mask,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "flow-stats": cmd_flow_stats,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toflow", description="Task-oriented flow: data, training and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--task", help="task name (overrides the config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--checkpoint")
        p.add_argument("--in", dest="corpus", help="corpus directory")
        p.add_argument("--out", help="output directory; nothing is written elsewhere")
        p.add_argument("--count", type=int, help="number of clips (gen-toy)")
    return parser


def write_manifest(out: Path, command: str, cfg: RunConfig, seed: int) -> None:
    inputs = {}
    if cfg.checkpoint:
        import hashlib

        inputs["checkpoint"] = hashlib.sha256(Path(cfg.checkpoint).read_bytes()).hexdigest()
    outputs = {k: v for k, v in dio.tree_hashes(out).items() if k != "manifest.json"}
    _write_json(out / "manifest.json", {"command": command, "seed": seed, "config": effective_config(cfg), "inputs": inputs, "outputs": outputs})


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        doc = {}
        if args.config:
            try:
                doc = json.loads(Path(args.config).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config: not valid JSON ({exc})") from None
        overrides = {"task": args.task, "seed": args.seed, "checkpoint": args.checkpoint, "corpus": args.corpus, "out": args.out, "count": args.count}
        cfg = build_config(doc, overrides, args.command)
    except ConfigurationError as exc:
        print(f"toflow: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"toflow: cannot read config: {exc}", file=sys.stderr)
        return 2

    seed = int(cfg.task().seed)
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", effective_config(cfg))
        HANDLERS[args.command](cfg, seed, out)
        write_manifest(out, args.command, cfg, seed)
    except ConfigurationError as exc:
        print(f"toflow: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything past validation is a runtime failure
        print(f"toflow: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
