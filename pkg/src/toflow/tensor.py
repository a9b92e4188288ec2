"""
Minimal reverse-mode autodiff over numpy arrays.

A `Tensor` wraps a contiguous array and, when produced by a differentiable
op, a closure mapping the output gradient to one gradient per parent.
`backward` walks the graph in reverse topological order and accumulates
gradients into every leaf that requires them.

Images are laid out channels x height x width. There is no batch axis; the
training loop runs at batch size 1.
"""
from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, ShapeError

DEFAULT_DTYPE = np.float32

Scalar = Union[int, float]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @classmethod
    def zeros(cls, shape, dtype=DEFAULT_DTYPE, requires_grad=False) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    @classmethod
    def ones(cls, shape, dtype=DEFAULT_DTYPE, requires_grad=False) -> "Tensor":
        return cls(np.ones(shape, dtype=dtype), requires_grad=requires_grad)

    # -- array protocol -------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}, requires_grad={self.requires_grad})"

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if not isinstance(b, Tensor):
        return Tensor._from_op(a.data + np.asarray(b, dtype=a.dtype), (a,), lambda g: (g,), "add_scalar")
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def neg(a: Tensor) -> Tensor:
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def sub(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -b)
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub"
    )


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if not isinstance(b, Tensor):
        s = np.asarray(b, dtype=a.dtype)
        return Tensor._from_op(a.data * s, (a,), lambda g: (g * s,), "scale")
    ad, bd = a.data, b.data

    def _bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Tensor._from_op(ad * bd, (a, b), _bw, "mul")


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is taken as 0."""
    on = x.data > 0
    return Tensor._from_op(np.where(on, x.data, 0).astype(x.dtype), (x,), lambda g: (g * on,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    # split on sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)
    return Tensor._from_op(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


# ---------------------------------------------------------------------------
# reductions, reshaping
# ---------------------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return Tensor._from_op(
        np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum"
    )


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return Tensor._from_op(
        np.asarray(x.data.mean(), dtype=x.dtype),
        (x,),
        lambda g: (np.broadcast_to(g / n, shape).astype(x.dtype),),
        "mean",
    )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None

    def _bw(g):
        idx = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return out

    return Tensor._from_op(data, tensors, _bw, "concat")


def narrow(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    shape, dtype = x.shape, x.dtype

    def _bw(g):
        full = np.zeros(shape, dtype=dtype)
        full[idx] = g
        return (full,)

    return Tensor._from_op(x.data[idx].copy(), (x,), _bw, "narrow")


# ---------------------------------------------------------------------------
# convolution and normalisation
# ---------------------------------------------------------------------------


def _resolve_padding(padding, kh: int, kw: int) -> Tuple[int, int]:
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigurationError(f"same padding needs odd kernel extents, got {kh}x{kw}")
        return (kh - 1) // 2, (kw - 1) // 2
    if isinstance(padding, int):
        return padding, padding
    ph, pw = padding
    return int(ph), int(pw)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, kernel=None, padding="same") -> Tensor:
    """
    Zero-padded 2-D cross-correlation of a C x H x W input.

    `weight` is out x in x kH x kW. `kernel`, if given, must agree with the
    weight extents. `padding` is "same", an int, or an (h, w) pair.
    """
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects CxHxW input and OxIxKxK weight, got {x.shape}, {weight.shape}")
    cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if kernel is not None and tuple(kernel) != (kh, kw):
        raise ShapeError(f"kernel {tuple(kernel)} disagrees with weight extents {(kh, kw)}")
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    ph, pw = _resolve_padding(padding, kh, kw)
    ho, wo = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: empty output for input {x.shape} and kernel {kh}x{kw}")

    wmat = weight.data.reshape(cout, -1)
    if kh == 1 and kw == 1 and ph == 0 and pw == 0:
        cols = x.data.reshape(cin, h * w)
    else:
        xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # C, Ho, Wo, kh, kw
        cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(cin * kh * kw, ho * wo)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(cout, ho, wo)

    parents = (x, weight) if bias is None else (x, weight, bias)
    xd = x.data

    def _bw(g):
        g2 = g.reshape(cout, ho * wo)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            if kh == 1 and kw == 1 and ph == 0 and pw == 0:
                gx = (wmat.T @ g2).reshape(xd.shape)
            elif cout <= cin and (ho, wo) == (h, w) and kh == 2 * ph + 1 and kw == 2 * pw + 1:
                # same-padded: input gradient is a correlation of g with the flipped, transposed kernel
                wflip = np.ascontiguousarray(weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)).reshape(cin, -1)
                gp = np.pad(g, ((0, 0), (ph, ph), (pw, pw)))
                gwin = sliding_window_view(gp, (kh, kw), axis=(1, 2))
                gcols = np.ascontiguousarray(gwin.transpose(0, 3, 4, 1, 2)).reshape(cout * kh * kw, h * w)
                gx = (wflip @ gcols).reshape(xd.shape)
            else:
                dcols = wmat.T @ g2
                dcols = dcols.reshape(cin, kh, kw, ho, wo)
                gxp = np.zeros((cin, h + 2 * ph, w + 2 * pw), dtype=xd.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, i : i + ho, j : j + wo] += dcols[:, i, j]
                gx = gxp[:, ph : ph + h, pw : pw + w]
        return (gx, gw) if bias is None else (gx, gw, gb)

    return Tensor._from_op(out, parents, _bw, "conv2d")


def spatial_norm(x: Tensor, gamma: Tensor, beta: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Per-channel standardisation over spatial positions, then affine."""
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"spatial_norm: gamma/beta must have shape ({c},)")
    d = x.data
    n = d.shape[1] * d.shape[2]
    mu = d.mean(axis=(1, 2), keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = xc * inv
    out = xhat * gamma.data[:, None, None] + beta.data[:, None, None]

    def _bw(g):
        ggamma = (g * xhat).sum(axis=(1, 2))
        gbeta = g.sum(axis=(1, 2))
        dxhat = g * gamma.data[:, None, None]
        gx = inv / n * (
            n * dxhat - dxhat.sum(axis=(1, 2), keepdims=True) - xhat * (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
        )
        return gx.astype(d.dtype), ggamma, gbeta

    return Tensor._from_op(out.astype(d.dtype), (x, gamma, beta), _bw, "spatial_norm")


# ---------------------------------------------------------------------------
# separable linear resampling
# ---------------------------------------------------------------------------


def separable(x: Tensor, rows: np.ndarray, cols: np.ndarray, op: str = "separable") -> Tensor:
    """out[c] = rows @ x[c] @ cols.T -- any per-axis linear resampling."""
    if x.ndim != 3:
        raise ShapeError(f"separable expects CxHxW, got {x.shape}")
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    if rows.shape[1] != x.shape[1] or cols.shape[1] != x.shape[2]:
        raise ShapeError(f"resampling matrices {rows.shape}, {cols.shape} do not fit input {x.shape}")
    out = np.matmul(np.matmul(rows, x.data), cols.T)
    return Tensor._from_op(out, (x,), lambda g: (np.matmul(np.matmul(rows.T, g), cols),), op)


def bilinear_matrix(n_in: int, n_out: int, scale: float) -> np.ndarray:
    """
    Interpolation weights for one axis. Output sample i reads input position
    (i + 0.5) / scale - 0.5, clamped to [0, n_in - 1].
    """
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), max(n_in - 2, 0))
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, lo + 1), frac)
    return m


def resize_bilinear(x: Tensor, scale: float, size: Optional[Tuple[int, int]] = None) -> Tensor:
    """
    Bilinear resize by `scale` with half-pixel centres and border clamping.

    Output extents are round(input * scale) unless `size` pins them.
    """
    if scale <= 0:
        raise ConfigurationError(f"resize scale must be positive, got {scale}")
    _, h, w = x.shape
    ho, wo = size if size is not None else (int(round(h * scale)), int(round(w * scale)))
    if ho <= 0 or wo <= 0:
        raise ConfigurationError(f"resize of {h}x{w} by {scale} gives an empty image")
    sy = ho / h if size is not None else scale
    sx = wo / w if size is not None else scale
    return separable(x, bilinear_matrix(h, ho, sy), bilinear_matrix(w, wo, sx), op="resize_bilinear")


# ---------------------------------------------------------------------------
# losses and the backward pass
# ---------------------------------------------------------------------------


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference. sign(0) = 0 at ties."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    s = np.sign(diff)

    def _bw(g):
        gp = (g / n * s).astype(pred.dtype)
        return gp, -gp

    return Tensor._from_op(np.asarray(np.abs(diff).mean(), dtype=pred.dtype), (pred, target), _bw, "l1_loss")


def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate `.grad` on every reachable leaf with requires_grad set."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def parameters_of(tensors: Iterable[Tensor]) -> list:
    return [t for t in tensors if t.requires_grad]
