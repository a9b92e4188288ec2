"""Hand-built clips with known filter verdicts, shared by unit and acceptance tests."""
import numpy as np

from toflow.data.toys import ToyParams, make_scene


def moving_scene(velocity=(4, 0), size=(32, 32), sprite=20, seed=0):
    """A triangle covering about 20% of the frame, moving at `velocity`."""
    rng = np.random.default_rng(seed)
    speed = float(np.hypot(*velocity))
    for _ in range(1000):
        scene = make_scene(ToyParams(size=size, sprite_size=(sprite, sprite), speed=(speed, speed)), rng)
        if scene.velocity == tuple(velocity):
            return scene
    raise RuntimeError("velocity not drawn")


def triplet(scene):
    frames = [scene.render(t) for t in range(3)]
    return frames, scene.flow(1, 0), scene.flow(1, 2)


def static_clip(size=(32, 32)):
    rng = np.random.default_rng(1)
    frame = rng.random((3,) + size).astype(np.float32)
    zero = np.zeros((2,) + size, np.float32)
    return [frame] * 3, zero, zero


def brightness_jump_clip():
    frames, v21, v23 = triplet(moving_scene())
    jump = 30.0 / 255.0
    return [frames[0] + jump, frames[1], frames[2] + jump], v21, v23


def nonlinear_clip():
    """The sprite goes out and comes back: frame 3 equals frame 1, so v21 = v23."""
    scene = moving_scene()
    frames = [scene.render(0), scene.render(1), scene.render(0)]
    back = scene.flow(1, 0)
    return frames, back, back.copy()
