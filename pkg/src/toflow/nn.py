"""Parameter containers shared by the flow, mask and head networks."""
from __future__ import annotations

from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .errors import ShapeError
from .tensor import DEFAULT_DTYPE, Tensor, conv2d, relu, spatial_norm


class ParamModule:
    """Anything exposing a flat name -> Tensor parameter map."""

    params: Dict[str, Tensor]

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise ShapeError(f"missing tensor {name!r}")
            a = arrays[name]
            if a.shape != p.shape:
                raise ShapeError(f"tensor {name!r}: stored shape {a.shape} != model shape {p.shape}")
            p.data[...] = a
        extra = sorted(set(arrays) - set(self.params))
        if extra:
            raise ShapeError(f"unexpected tensor {extra[0]!r}")

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag


class ConvStack(ParamModule):
    """
    A chain of same-padded convolutions.

    Hidden layers are followed by an optional spatial_norm and a ReLU; the
    final layer is left linear.
    """

    def __init__(
        self,
        prefix: str,
        in_channels: int,
        channels: Sequence[int],
        kernels: Sequence[int],
        rng: np.random.Generator,
        norm: bool = False,
        zero_last: bool = True,
        dtype=DEFAULT_DTYPE,
    ):
        if len(channels) != len(kernels):
            raise ValueError("channels and kernels must have equal length")
        self.in_channels = in_channels
        self.norm = norm
        self.params = {}
        self.layers = []
        cin = in_channels
        for i, (cout, k) in enumerate(zip(channels, kernels)):
            last = i == len(channels) - 1
            fan_in = cin * k * k
            if last and zero_last:
                w = np.zeros((cout, cin, k, k))
            else:
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k))
            layer = {
                "weight": Tensor(w.astype(dtype), requires_grad=True),
                "bias": Tensor(np.zeros(cout, dtype=dtype), requires_grad=True),
            }
            if norm and not last:
                layer["gamma"] = Tensor(np.ones(cout, dtype=dtype), requires_grad=True)
                layer["beta"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
            for key, t in layer.items():
                self.params[f"{prefix}.{i}.{key}"] = t
            self.layers.append(layer)
            cin = cout

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[0] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} input channels, got {x.shape[0]}")
        n = len(self.layers)
        for i, layer in enumerate(self.layers):
            x = conv2d(x, layer["weight"], layer["bias"])
            if i < n - 1:
                if self.norm:
                    x = spatial_norm(x, layer["gamma"], layer["beta"])
                x = relu(x)
        return x


def merge_params(*named: Iterable[tuple]) -> Dict[str, Tensor]:
    out: Dict[str, Tensor] = {}
    for prefix, module in named:
        for k, v in module.params.items():
            key = f"{prefix}.{k}" if prefix else k
            if key in out:
                raise ValueError(f"duplicate parameter name {key!r}")
            out[key] = v
    return out


def randomize(params: Dict[str, Tensor], rng: Optional[np.random.Generator] = None, scale: float = 0.1) -> None:
    """Overwrite every parameter with small noise; used to exercise gradients through zero-initialised layers."""
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.data[...] = p.data + rng.normal(0.0, scale, size=p.shape).astype(p.dtype)
