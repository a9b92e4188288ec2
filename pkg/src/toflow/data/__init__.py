from .clip import VideoClip, quantize
from .degrade import DegradationSpec, degrade
from .filters import (
    FilterResult,
    FlowHistogram,
    filter_interp_triplet,
    filter_septuplet,
    flow_histogram,
    keep_in_range,
    shot_detect,
)
from .io import load_clip, load_corpus, read_flo, read_png, save_clip, save_corpus, write_flo, write_png
from .toys import BoxNoiseParams, SpriteScene, ToyParams, gen_boxnoise_toy, gen_triangle_toy, make_scene
