import numpy as np
import pytest

from toflow.errors import ConfigurationError, ShapeError
from toflow.heads import DenoiseHead, HeadConfig, InterpHead, SRHead, bicubic_resize
from toflow.metrics import psnr
from toflow.tensor import Tensor


def frames(n, shape=(3, 16, 16), seed=0):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.random(shape).astype(np.float32)) for _ in range(n)]


def test_interp_zero_residual_is_average():
    a, b = frames(2)
    out = InterpHead(HeadConfig.for_task("interpolation"))(a, b)
    np.testing.assert_allclose(out.data, (a.data + b.data) / 2, rtol=0, atol=0)


def test_interp_channel_counts():
    assert InterpHead(HeadConfig.for_task("interpolation")).in_channels == 6
    assert InterpHead(HeadConfig.for_task("interpolation", use_mask=True)).in_channels == 12


def test_interp_mask_arguments_must_match_config():
    a, b = frames(2)
    with pytest.raises(ShapeError):
        InterpHead(HeadConfig.for_task("interpolation"))(a, b, a, b)
    with pytest.raises(ShapeError):
        InterpHead(HeadConfig.for_task("interpolation", use_mask=True))(a, b)
    with pytest.raises(ShapeError):
        InterpHead(HeadConfig.for_task("interpolation"))(a, Tensor(np.zeros((3, 8, 8), np.float32)))


def test_denoise_head():
    head = DenoiseHead(HeadConfig.for_task("denoising", n_frames=7))
    assert head.in_channels == 21
    out = head(frames(7))
    assert out.shape == (3, 16, 16)
    # no residual path: the last layer starts random, not zero
    assert np.abs(head.stack.layers[-1]["weight"].data).max() > 0
    with pytest.raises(ShapeError):
        head(frames(5))


def test_sr_zero_residual_is_bicubic_reference():
    lr = frames(7, (3, 4, 6))
    up = [bicubic_resize(f, 4) for f in lr]
    out = SRHead(HeadConfig.for_task("super-resolution"))(up, up[3])
    assert out.shape == (3, 16, 24)
    np.testing.assert_array_equal(out.data, up[3].data)


def test_sr_resolution_and_arity_errors():
    head = SRHead(HeadConfig.for_task("super-resolution"))
    up = frames(7)
    with pytest.raises(ShapeError):
        head(up[:6], up[3])
    with pytest.raises(ShapeError):
        head(up, Tensor(np.zeros((3, 8, 8), np.float32)))


def test_sr_output_size_for_full_frames():
    lr = np.random.default_rng(0).random((3, 64, 112)).astype(np.float32)
    assert bicubic_resize(lr, 4).shape == (3, 256, 448)


def test_bicubic_identity_and_constant():
    img = np.random.default_rng(1).random((3, 9, 11))
    np.testing.assert_allclose(bicubic_resize(img, 1).data, img, atol=1e-6)
    for factor in (0.25, 0.5, 2, 3, 4):
        np.testing.assert_allclose(bicubic_resize(np.full((3, 16, 16), 0.7), factor).data, 0.7, atol=1e-12)


def test_bicubic_round_trip_on_smooth_image():
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    img = np.stack([0.5 + 0.4 * np.sin(2 * xx + yy), xx * yy, 0.3 + 0.2 * np.cos(3 * yy)])
    back = bicubic_resize(bicubic_resize(img, 0.25), 4).data
    assert psnr(np.clip(back, 0, 1), img) > 40


def test_bicubic_degenerate():
    with pytest.raises(ConfigurationError):
        bicubic_resize(np.zeros((3, 2, 2)), 0.1)


def test_head_config_rejects_mask_outside_interpolation():
    with pytest.raises(ConfigurationError):
        HeadConfig("denoising", use_mask=True)
