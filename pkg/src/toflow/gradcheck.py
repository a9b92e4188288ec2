"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    samples: int

    def ok(self, tol: float) -> bool:
        return self.max_rel_err < tol


def rel_err(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _central(fn, flat, i, h) -> float:
    orig = flat[i]
    flat[i] = orig + h
    fp = fn().item()
    flat[i] = orig - h
    fm = fn().item()
    flat[i] = orig
    return (fp - fm) / (2 * h)


def _sample_err(fn, flat, i, analytic, h, denom_floor, retry_h, retry_above) -> float:
    """
    Relative error at one coordinate. If it exceeds `retry_above` and a
    `retry_h` is given, re-measure with that step and keep the better one:
    a step straddling a relu kink disagrees at one step size only, while a
    wrong gradient disagrees at both.
    """
    err = rel_err(analytic, _central(fn, flat, i, h), denom_floor)
    if retry_h is not None and err > retry_above:
        err = min(err, rel_err(analytic, _central(fn, flat, i, retry_h), denom_floor))
    return err


def _grad_scale(tensors: Dict[str, Tensor]) -> float:
    return max((float(np.abs(t.grad).max()) for t in tensors.values() if t.grad is not None), default=0.0)


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Dict[str, Tensor],
    samples: int = 100,
    h: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-8,
    scale_floor: float = 1e-3,
    retry_h: Optional[float] = None,
    retry_above: float = 1e-7,
) -> Dict[str, GradCheckResult]:
    """
    Compare autodiff gradients of the scalar `fn()` with central differences.

    `samples` random coordinates are drawn per tensor (all of them if the
    tensor is smaller). Everything is expected to be float64. The relative
    error denominator is floored at `scale_floor` times the largest gradient
    entry over all checked tensors, so entries many orders below that scale
    (including exact zeros, e.g. a bias feeding a normalisation) are judged
    against rounding noise of that scale rather than their own size.
    """
    rng = np.random.default_rng(seed)
    for t in tensors.values():
        t.grad = None
    backward(fn())
    denom_floor = max(floor, scale_floor * _grad_scale(tensors))
    out = {}
    for name, t in tensors.items():
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= samples else rng.choice(n, size=samples, replace=False)
        worst = 0.0
        for i in idx:
            e = _sample_err(fn, flat, i, float(grad.reshape(-1)[i]), h, denom_floor, retry_h, retry_above)
            worst = max(worst, e)
        out[name] = GradCheckResult(name, worst, len(idx))
    return out


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """A smooth scalar probe of `out`: sum(out * weights)."""
    from .tensor import mul, sum_all

    return sum_all(mul(out, Tensor(weights)))


def probe_weights(shape: Sequence[int], seed: int = 1) -> np.ndarray:
    return np.random.default_rng(seed).normal(size=shape)


def check_joint(
    fn: Callable[[], Tensor],
    tensors: Dict[str, Tensor],
    samples: int = 100,
    h: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-8,
    scale_floor: float = 1e-3,
    retry_h: Optional[float] = None,
    retry_above: float = 1e-7,
) -> GradCheckResult:
    """Like `check_gradients`, but `samples` coordinates drawn across all tensors together."""
    rng = np.random.default_rng(seed)
    names = list(tensors)
    for t in tensors.values():
        t.grad = None
    backward(fn())
    sizes = np.array([tensors[n].data.size for n in names])
    picks = rng.choice(int(sizes.sum()), size=min(samples, int(sizes.sum())), replace=False)
    bounds = np.cumsum(sizes)
    denom_floor = max(floor, scale_floor * _grad_scale(tensors))
    worst = 0.0
    for flat_i in picks:
        k = int(np.searchsorted(bounds, flat_i, side="right"))
        i = int(flat_i - (bounds[k - 1] if k else 0))
        t = tensors[names[k]]
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        e = _sample_err(fn, flat, i, float(grad.reshape(-1)[i]), h, denom_floor, retry_h, retry_above)
        worst = max(worst, e)
    return GradCheckResult("joint", worst, len(picks))
