import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toflow.data.toys import ToyParams, make_scene
from toflow.errors import ShapeError
from toflow.masknet import MaskNet, MaskPyramidConfig, apply_masks, occlusion_oracle
from toflow.nn import randomize
from toflow.tensor import Tensor


def test_mask_shapes_and_init():
    net = MaskNet(MaskPyramidConfig(levels=3))
    m21, m23 = net(Tensor(np.zeros((2, 20, 12), np.float32)), Tensor(np.zeros((2, 20, 12), np.float32)))
    assert m21.shape == m23.shape == (1, 20, 12)
    # zero residual at init leaves the sigmoid at the configured bias
    np.testing.assert_allclose(m21.data, 1 / (1 + np.exp(-2.0)), rtol=1e-6)


def test_level_channels():
    net = MaskNet(MaskPyramidConfig(levels=3, channels=(4, 2)))
    assert [s.in_channels for s in net.subnets] == [4, 6, 6]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**16), st.floats(0.1, 50.0))
def test_masks_stay_in_unit_interval(seed, scale):
    rng = np.random.default_rng(seed)
    net = MaskNet(MaskPyramidConfig(levels=2, channels=(4, 2), kernel=3), seed=seed, dtype=np.float64)
    randomize(net.params, rng, 1.0)
    m21, m23 = net(Tensor(rng.normal(scale=scale, size=(2, 8, 8))), Tensor(rng.normal(scale=scale, size=(2, 8, 8))))
    for m in (m21.data, m23.data):
        assert np.all((m >= 0) & (m <= 1))


def test_extent_mismatch():
    net = MaskNet(MaskPyramidConfig(levels=2, channels=(4, 2)))
    with pytest.raises(ShapeError):
        net(Tensor(np.zeros((2, 8, 8))), Tensor(np.zeros((2, 8, 4))))


def test_oracle_static_scene_all_valid():
    z = np.zeros((2, 10, 10))
    assert np.array_equal(occlusion_oracle(z, z), np.ones((1, 10, 10)))


def test_oracle_inconsistent_constant_flows():
    f = np.zeros((2, 10, 10))
    f[0] = 2.0
    assert not occlusion_oracle(f, np.zeros((2, 10, 10))).any()


def test_oracle_triangle_moving_down():
    rng = np.random.default_rng(0)
    while True:
        scene = make_scene(ToyParams(size=(48, 48), speed=(4, 4)), rng)
        if scene.velocity == (0, 4):
            break
    ref = scene.ref
    mask = occlusion_oracle(scene.flow(ref, ref + 1), scene.flow(ref + 1, ref))[0]
    covered = scene.sprite_cover(ref + 1) & ~scene.sprite_cover(ref)
    np.testing.assert_array_equal(mask == 0, covered)
    assert np.array_equal(mask, scene.occlusion(ref, ref + 1)[0])
    # one band per column, at most 4 px tall, exactly 4 where the sprite is at least that tall
    heights = covered.sum(axis=0)
    sprite_heights = scene.sprite_cover(ref).sum(axis=0)
    assert heights.max() == 4
    np.testing.assert_array_equal(heights[sprite_heights >= 4], 4)


def test_apply_masks():
    rng = np.random.default_rng(1)
    a, b = Tensor(rng.random((3, 5, 5))), Tensor(rng.random((3, 5, 5)))
    one, zero, half = (Tensor(np.full((1, 5, 5), v)) for v in (1.0, 0.0, 0.5))
    x, y = apply_masks(a, b, one, one)
    assert np.array_equal(x.data, a.data) and np.array_equal(y.data, b.data)
    x, y = apply_masks(a, b, zero, zero)
    assert not x.data.any() and not y.data.any()
    x, _ = apply_masks(a, b, half, one)
    np.testing.assert_allclose(x.data, a.data / 2)
    with pytest.raises(ShapeError):
        apply_masks(a, b, Tensor(np.ones((1, 4, 5))), one)
