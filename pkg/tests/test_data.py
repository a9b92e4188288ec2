import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenes import brightness_jump_clip, moving_scene, nonlinear_clip, static_clip, triplet
from toflow.data import (
    BoxNoiseParams,
    DegradationSpec,
    ToyParams,
    degrade,
    filter_interp_triplet,
    filter_septuplet,
    flow_histogram,
    gen_boxnoise_toy,
    gen_triangle_toy,
    keep_in_range,
    shot_detect,
)
from toflow.data.clip import VideoClip
from toflow.data.filters import split_shots
from toflow.tensor import Tensor
from toflow.warp import bilinear_warp


def frames_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


# -- generators ----------------------------------------------------------------


def test_downward_sprite_flow():
    scene = moving_scene((0, 4), size=(48, 48), sprite=16)
    clip = scene.to_clip()
    v23 = clip.flows[2]
    cover = scene.sprite_cover(1)
    assert np.all(v23[0] == 0)
    assert np.all(v23[1][cover] == 4)
    assert np.all(v23[1][~cover] == 0)


def test_zero_velocity_frames_equal():
    clip = gen_triangle_toy(ToyParams(speed=(0, 0)), count=1, seed=3)[0]
    assert frames_equal(clip.frames, [clip.frames[1]] * 3)


def test_generator_deterministic():
    a = gen_triangle_toy(ToyParams(background="texture"), count=4, seed=9)
    b = gen_triangle_toy(ToyParams(background="texture"), count=4, seed=9)
    for x, y in zip(a, b):
        assert frames_equal(x.frames, y.frames)
        assert all(np.array_equal(x.flows[j], y.flows[j]) for j in x.flows)


def test_sprite_larger_than_frame_rejected():
    with pytest.raises(ValueError):
        ToyParams(size=(16, 16), sprite_size=(14, 22))


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 2**16),
    n=st.sampled_from([3, 7]),
    bg=st.sampled_from(["black", "texture"]),
    bg_speed=st.sampled_from([(0.0, 0.0), (1.0, 2.0)]),
)
def test_gt_flow_warps_exactly_on_valid_pixels(seed, n, bg, bg_speed):
    speed = (1.0, 3.0) if n == 7 else (1.0, 8.0)
    params = ToyParams(n_frames=n, speed=speed, background=bg, bg_speed=bg_speed, sprite_texture=True)
    clip = gen_triangle_toy(params, count=1, seed=seed)[0]
    ref = clip.frames[clip.ref]
    for j, flow in clip.flows.items():
        warped = bilinear_warp(Tensor(clip.frames[j].astype(np.float64)), Tensor(flow.astype(np.float64))).data
        valid = clip.masks[j][0] > 0.5
        assert np.array_equal(warped[:, valid], ref[:, valid].astype(np.float64))


def test_boxnoise_zero_density_is_clean():
    clips = gen_boxnoise_toy(BoxNoiseParams(density=0.0), count=2, seed=1)
    for c in clips:
        assert frames_equal(c.frames, c.clean)


def test_boxnoise_density_monte_carlo():
    clips = gen_boxnoise_toy(BoxNoiseParams(density=0.1), count=100, seed=2)
    fracs = [np.mean(np.any(f != g, axis=0)) for c in clips for f, g in zip(c.frames, c.clean)]
    # a box colour can coincide with the pixel beneath it, so only a lower margin is lost
    assert abs(np.mean(fracs) - 0.1) < 0.01


def test_boxnoise_deterministic_and_boxes_differ_per_frame():
    a = gen_boxnoise_toy(count=2, seed=5)
    b = gen_boxnoise_toy(count=2, seed=5)
    assert frames_equal(a[0].frames, b[0].frames)
    noise = [np.any(f != g, axis=0) for f, g in zip(a[0].frames, a[0].clean)]
    assert not np.array_equal(noise[0], noise[1])


# -- degradations --------------------------------------------------------------


def flat_clip(v=0.5, shape=(3, 16, 16), n=3):
    return VideoClip([np.full(shape, v, np.float32) for _ in range(n)], ref=n // 2)


def test_zero_sigma_identity():
    clip = gen_triangle_toy(count=1, seed=0)[0]
    out = degrade(clip, DegradationSpec("gaussian", sigma=0.0), seed=1)
    assert frames_equal(out.frames, clip.frames)
    assert frames_equal(out.clean, clip.frames)


def test_gaussian_std_monte_carlo():
    clip = flat_clip(0.5, (1, 500, 500), n=4)
    out = degrade(clip, DegradationSpec("gaussian", sigma=0.1), seed=3)
    sample = np.concatenate([f.ravel() for f in out.frames]).astype(np.float64)
    assert sample.size == 10**6
    assert abs(sample.std() - 0.1) < 0.005


def test_mixed_noise_rate():
    out = degrade(flat_clip(0.5, (3, 200, 200)), DegradationSpec("mixed", sigma=0.0, p=0.1), seed=4)
    f = out.frames[0]
    hit = np.all((f == 0) | (f == 1), axis=0)
    assert abs(hit.mean() - 0.1) < 0.01
    assert abs(f[0][hit].mean() - 0.5) < 0.05


def test_blocky_constant_unchanged_and_textured_changed():
    clip = flat_clip(0.37, (3, 20, 24))
    out = degrade(clip, DegradationSpec("blocky", q=40), seed=0)
    np.testing.assert_allclose(out.frames[0], clip.frames[0], atol=1e-6)
    tex = gen_triangle_toy(ToyParams(background="texture"), count=1, seed=0)[0]
    assert not np.allclose(degrade(tex, DegradationSpec("blocky", q=40)).frames[0], tex.frames[0], atol=1e-3)


def test_downsample_shape():
    out = degrade(flat_clip(0.2, (3, 32, 48)), DegradationSpec("downsample", k=4))
    assert out.frames[0].shape == (3, 8, 12)
    np.testing.assert_allclose(out.frames[0], 0.2, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(kind=st.sampled_from(["gaussian", "mixed", "blocky", "downsample"]), seed=st.integers(0, 1000))
def test_degradations_stay_in_unit_range(kind, seed):
    clip = gen_triangle_toy(ToyParams(background="texture", size=(32, 32), sprite_size=(10, 14)), count=1, seed=seed)[0]
    out = degrade(clip, DegradationSpec(kind, sigma=0.3, q=80), seed=seed)
    for f in out.frames:
        assert f.min() >= 0 and f.max() <= 1


@pytest.mark.parametrize(
    "kw", [dict(kind="blur"), dict(sigma=-1.0), dict(p=1.5), dict(kind="blocky", q=0), dict(kind="downsample", k=0)]
)
def test_invalid_spec(kw):
    with pytest.raises(ValueError):
        DegradationSpec(**kw)


# -- filters -------------------------------------------------------------------


def test_static_rejected_for_motion():
    res = filter_interp_triplet(*static_clip())
    assert not res.accepted and res.reasons == ["a"]


def test_compliant_triangle_accepted():
    scene = moving_scene()
    assert 0.18 < scene.sprite_cover(1).mean() < 0.22
    res = filter_interp_triplet(*triplet(scene))
    assert res.accepted, res


def test_brightness_jump_rejected():
    frames, v21, v23 = brightness_jump_clip()
    res = filter_interp_triplet(frames, v21, v23)
    assert res.reasons == ["b"]
    assert res.stats["warp_l1"] >= 30 / 255 - 1e-6


def test_nonlinear_rejected():
    res = filter_interp_triplet(*nonlinear_clip())
    assert res.reasons == ["c"]


def test_septuplet_filter():
    frames, zero, _ = static_clip()
    assert not filter_septuplet(frames, {0: zero, 2: zero}, ref=1).accepted
    clip = gen_triangle_toy(ToyParams(n_frames=7, speed=(4, 4), size=(48, 48), sprite_size=(20, 20)), count=1, seed=0)[0]
    assert filter_septuplet(clip, clip.flows).accepted
    frames, v21, v23 = triplet(moving_scene())
    assert filter_interp_triplet(frames, v21, v23).accepted
    assert filter_septuplet(frames, {0: v21, 2: v23}, ref=1).accepted


def test_shot_detection():
    a = [np.full((3, 8, 8), 0.1)] * 4
    b = [np.full((3, 8, 8), 0.9)] * 3
    assert shot_detect(a, 0.3) == []
    assert shot_detect(a + b, 0.3) == [4]
    assert split_shots(a + b, 0.3) == [(0, 4), (4, 7)]
    fade = [np.full((3, 8, 8), 0.1 + 0.05 * i) for i in range(16)]
    assert shot_detect(fade, 0.3) == []
    with pytest.raises(ValueError):
        shot_detect(a[:1], 0.3)


def test_histogram_cases():
    z = flow_histogram([np.zeros((2, 4, 4))])
    assert z.pixel_counts[0] == 16 and z.pixel_counts.sum() == 16
    c = np.stack([np.full((4, 4), 3.0), np.full((4, 4), 4.0)])
    h = flow_histogram([c])
    nz = np.flatnonzero(h.pixel_counts)
    assert len(nz) == 1 and h.edges[nz[0]] == 5.0
    assert h.image_means[0] == 5.0


def test_range_filter_on_corpus():
    clips = gen_triangle_toy(ToyParams(bg_speed=(0, 3), background="texture"), count=30, seed=4)
    flows = [c.flows[2] for c in clips]
    kept = keep_in_range(flows)
    assert 0 < len(kept) < 30
    means = flow_histogram([flows[i] for i in kept]).image_means
    assert np.all((means >= 1) & (means <= 8))
