import numpy as np
import pytest

from toflow.checkpoint import load_checkpoint
from toflow.data import BoxNoiseParams, DegradationSpec, ToyParams, degrade, gen_boxnoise_toy, gen_triangle_toy
from toflow.errors import ConfigurationError, ShapeError
from toflow.metrics import psnr
from toflow.pipeline import (
    TaskConfig,
    TaskModel,
    evaluate,
    infer,
    mask_mae,
    model_from_checkpoint,
    pretrain_flow,
    pretrain_mask,
    train_joint,
    training_pairs,
    warp_average_baseline,
)

TINY = dict(levels=2, flow_channels=(4, 2), mask_channels=(4, 2), head_width=4)


def tiny(task="interpolation", **kw):
    return TaskModel(TaskConfig(task=task, **{**TINY, **kw}))


@pytest.fixture(scope="module")
def triangles():
    return gen_triangle_toy(ToyParams(size=(16, 16), sprite_size=(6, 8), speed=(1, 3)), count=6, seed=0)


# -- config --------------------------------------------------------------------


def test_task_defaults():
    cfg = TaskConfig(task="denoising")
    assert cfg.n_frames == 7 and cfg.ref == 3 and cfg.lr == 1e-4 and cfg.prewarp
    cfg = TaskConfig()
    assert cfg.n_frames == 3 and cfg.lr == 3e-4 and not cfg.prewarp


@pytest.mark.parametrize(
    "kw,field",
    [
        (dict(task="deraining"), "task"),
        (dict(n_frames=4), "n_frames"),
        (dict(task="denoising", use_mask=True), "use_mask"),
        (dict(lr=-1.0), "lr"),
        (dict(batch_size=4), "batch_size"),
        (dict(weight_decay=-1.0), "weight_decay"),
    ],
)
def test_config_errors_name_field(kw, field):
    with pytest.raises(ConfigurationError, match=f"^{field}:"):
        TaskConfig(**kw)


def test_config_round_trip_and_unknown_keys():
    cfg = TaskConfig(task="super-resolution", seed=3, resolution=(32, 32))
    assert TaskConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigurationError, match="^colour:"):
        TaskConfig.from_dict({"colour": "green"})


# -- model assembly ------------------------------------------------------------


def test_zero_init_models_reduce_to_baselines(triangles):
    clip = triangles[0]
    out = infer(tiny(), clip)
    np.testing.assert_allclose(out, (clip.frames[0] + clip.frames[2]) / 2, atol=1e-6)
    sr = tiny("super-resolution", sr_factor=2)
    lr = [f[:, ::2, ::2] for f in gen_triangle_toy(ToyParams(n_frames=7, size=(16, 16), sprite_size=(4, 6), speed=(1, 1)), count=1)[0].frames]
    up = sr.upsample_inputs(lr)[3].data
    np.testing.assert_array_equal(infer(sr, lr), up)


def test_arity_checked(triangles):
    with pytest.raises(ShapeError):
        infer(tiny("denoising"), triangles[0])


def test_infer_bit_identical(triangles):
    m = tiny(use_mask=True)
    from toflow.nn import randomize

    randomize(m.params, np.random.default_rng(0), 0.05)
    a, b = infer(m, triangles[1]), infer(m, triangles[1])
    assert a.tobytes() == b.tobytes()


def test_frozen_flow_excluded_from_training(triangles):
    m = tiny(freeze_flow=True)
    assert set(m.trainable_params()) == set(m.head_params())
    before = m.fingerprint("flow")
    train_joint(m, training_pairs(triangles), steps=3)
    assert m.fingerprint("flow") == before


def test_joint_training_moves_flow(triangles):
    m = tiny()
    pretrain_flow(m, triangles, steps=3)
    before = {k: v.data.copy() for k, v in m.flow_params().items()}
    train_joint(m, training_pairs(triangles), steps=len(triangles))  # one epoch
    dist = sum(float(((v.data - before[k]) ** 2).sum()) for k, v in m.flow_params().items())
    assert dist > 0


def test_joint_training_never_sees_flow_labels(triangles):
    pairs = training_pairs(triangles)
    assert all(len(p) == 2 and isinstance(p[1], np.ndarray) for p in pairs)


def test_task_mismatch_rejected(triangles):
    blob = tiny().to_bytes()
    with pytest.raises(ConfigurationError):
        tiny("denoising").load(load_checkpoint(blob))
    m = tiny()
    with pytest.raises(ConfigurationError):
        train_joint(m, training_pairs(triangles), TaskConfig(task="denoising", **TINY), steps=1)


def test_checkpoint_restores_model(triangles):
    m = tiny(use_mask=True)
    train_joint(m, training_pairs(triangles), steps=2)
    back = model_from_checkpoint(load_checkpoint(m.to_bytes()))
    assert back.fingerprint() == m.fingerprint()
    assert infer(back, triangles[0]).tobytes() == infer(m, triangles[0]).tobytes()


# -- pretraining ---------------------------------------------------------------


def test_first_flow_loss_is_mean_gt_magnitude(triangles):
    m = tiny()
    losses = pretrain_flow(m, triangles, steps=1)
    from toflow.pipeline import _epoch_order

    clip = triangles[_epoch_order(6, 0, 0)[0]]
    expect = (np.abs(clip.flows[0]).mean() + np.abs(clip.flows[2]).mean()) / 2
    assert losses[0] == pytest.approx(expect, rel=1e-5)


def test_flow_pretraining_deterministic(triangles):
    assert pretrain_flow(tiny(), triangles, steps=4) == pretrain_flow(tiny(), triangles, steps=4)


def test_flow_pretraining_needs_labels(triangles):
    unlabeled = [c.with_frames(c.frames, flows=None) for c in triangles]
    with pytest.raises(ValueError):
        pretrain_flow(tiny(), unlabeled, steps=1)


def test_mask_pretraining_on_all_valid_corpus(triangles):
    ones = [c.with_frames(c.frames, masks={j: np.ones_like(m) for j, m in c.masks.items()}) for c in triangles]
    m = tiny(use_mask=True, lr=1e-2)
    losses = pretrain_mask(m, ones, steps=60)
    assert losses[-1] < losses[0]
    assert mask_mae(m, ones) < 0.05
    assert pretrain_mask(tiny(use_mask=True, lr=1e-2), ones, steps=5) == pretrain_mask(
        tiny(use_mask=True, lr=1e-2), ones, steps=5
    )


def test_mask_pretraining_needs_mask_net(triangles):
    with pytest.raises(ConfigurationError):
        pretrain_mask(tiny(), triangles, steps=1)


# -- baselines and evaluation --------------------------------------------------


def test_gt_warp_average_exact_without_occlusion():
    clip = gen_triangle_toy(ToyParams(speed=(0, 0)), count=1, seed=2)[0]
    assert np.array_equal(warp_average_baseline(clip), clip.frames[1].astype(np.float64))


def test_septuplet_baseline_includes_reference():
    clip = gen_boxnoise_toy(BoxNoiseParams(density=0.0), count=1, seed=0)[0]
    base = warp_average_baseline(clip)
    valid = np.all([m[0] > 0.5 for m in clip.masks.values()], axis=0)
    np.testing.assert_allclose(base[:, valid], clip.clean[3][:, valid], atol=1e-6)


def test_evaluate_reports_every_clip(triangles):
    rep = evaluate(tiny(), training_pairs(triangles), ids=[c.clip_id for c in triangles])
    assert rep.count == 6 and rep.clip_ids[0] == "00000"
    assert np.isfinite(rep.mean_psnr)


def test_degraded_clip_scored_against_clean():
    clip = gen_triangle_toy(count=1, seed=0)[0]
    noisy = degrade(clip, DegradationSpec("gaussian", sigma=0.1), seed=0)
    assert noisy.target is noisy.clean[1]
    assert psnr(noisy.frames[1], noisy.target) < 25
