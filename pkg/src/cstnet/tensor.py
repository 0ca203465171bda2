"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a contiguous numpy array together with an optional
``OpRecord`` describing how it was produced.  Calling ``backward()`` on a
scalar result walks the recorded graph once in reverse topological order and
accumulates gradients into the ``grad`` buffers of the ``requires_grad``
leaves.  The op set is exactly what the network needs: elementwise arithmetic
with singleton-extent broadcasting, (batched) matmul, softmax/log-softmax,
2d convolution, adaptive average pooling, batch normalization, reductions,
shape manipulation, frame gathering and per-descriptor standardization.

All forward math runs on numpy; every backward rule lives here and is checked
against central finite differences (see ``gradcheck``).  Graphs are
single-threaded: one forward+backward pass owns its graph exclusively.
Tensors without gradient state are immutable by convention and safe to share.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_node_ids = itertools.count()
_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (e.g. for evaluation)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class OpRecord:
    """How a tensor was produced: op kind, input tensors, saved values.

    ``backward_fn(grad, saved)`` returns one gradient array (or None) per
    input; it must consume only its own ``saved`` values.
    """

    __slots__ = ("op_kind", "inputs", "saved", "backward_fn")

    def __init__(self, op_kind: str, inputs: tuple, saved: tuple, backward_fn: Callable):
        self.op_kind = op_kind
        self.inputs = inputs
        self.saved = saved
        self.backward_fn = backward_fn


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "node_id")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.op: Optional[OpRecord] = None
        self.node_id = next(_node_ids)

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- gradient bookkeeping ------------------------------------------------
    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this scalar onto all requires_grad leaves.

        Visits each graph node exactly once, in reverse topological order.
        Repeated calls without ``zero_grad`` accumulate additively.
        """
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return

        # Iterative depth-first topological sort over grad-requiring nodes.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.op is not None:
                for parent in node.op.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

        flowing: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node.op is None:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
                continue
            in_grads = node.op.backward_fn(g, node.op.saved)
            for parent, ig in zip(node.op.inputs, in_grads):
                if ig is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in flowing:
                    flowing[key] += ig
                else:
                    flowing[key] = ig

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def permute(self, *axes):
        return permute(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def constant(data, dtype=None) -> Tensor:
    """A non-differentiable tensor (masks, targets, wrapped inputs)."""
    return Tensor(data, requires_grad=False, dtype=dtype)


# ---------------------------------------------------------------------------
# op plumbing
# ---------------------------------------------------------------------------

def _result(op_kind: str, inputs: tuple, out_data: np.ndarray, backward_fn, saved: tuple = ()) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.node_id = next(_node_ids)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.op = OpRecord(op_kind, inputs, saved, backward_fn)
    else:
        out.requires_grad = False
        out.op = None
    return out


def _as_pair(a, b, op_kind: str) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = constant(np.asarray(a, dtype=b.data.dtype))
    if not isinstance(b, Tensor):
        b = constant(np.asarray(b, dtype=a.data.dtype))
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op_kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None
    return a, b


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape`` (singleton extents only)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_pair(a, b, "add")

    def bw(g, saved):
        sa, sb = saved
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result("add", (a, b), a.data + b.data, bw, (a.shape, b.shape))


def sub(a, b) -> Tensor:
    a, b = _as_pair(a, b, "sub")

    def bw(g, saved):
        sa, sb = saved
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return _result("sub", (a, b), a.data - b.data, bw, (a.shape, b.shape))


def mul(a, b) -> Tensor:
    a, b = _as_pair(a, b, "mul")

    def bw(g, saved):
        ad, bd = saved
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result("mul", (a, b), a.data * b.data, bw, (a.data, b.data))


def div(a, b) -> Tensor:
    a, b = _as_pair(a, b, "div")

    def bw(g, saved):
        ad, bd = saved
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)

    return _result("div", (a, b), a.data / b.data, bw, (a.data, b.data))


def neg(a: Tensor) -> Tensor:
    return _result("neg", (a,), -a.data, lambda g, s: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar constant."""
    s = float(s)
    return _result("scale", (a,), a.data * s, lambda g, saved: (g * saved[0],), (s,))


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)

    def bw(g, saved):
        return (g * (saved[0] > 0),)

    return _result("relu", (a,), out, bw, (a.data,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g, saved):
        y = saved[0]
        return (g * y * (1.0 - y),)

    return _result("sigmoid", (a,), out, bw, (out,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result("exp", (a,), out, lambda g, s: (g * s[0],), (out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log requires strictly positive input")
    return _result("log", (a,), np.log(a.data), lambda g, s: (g / s[0],), (a.data,))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise NumericError("sqrt requires non-negative input")
    out = np.sqrt(a.data)

    def bw(g, saved):
        y = saved[0]
        return (g / (2.0 * np.maximum(y, 1e-300)),)

    return _result("sqrt", (a,), out, bw, (out,))


def softmax(a: Tensor, axis: int) -> Tensor:
    """Numerically stabilized softmax along ``axis``; slices sum to 1."""
    x = a.data
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    if np.isnan(x).any():
        raise NumericError("softmax received NaN input")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g, saved):
        y, ax = saved
        return (y * (g - (g * y).sum(axis=ax, keepdims=True)),)

    return _result("softmax", (a,), out, bw, (out, axis))


def log_softmax(a: Tensor, axis: int) -> Tensor:
    x = a.data
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"log_softmax: axis {axis} invalid for shape {x.shape}")
    if np.isnan(x).any():
        raise NumericError("log_softmax received NaN input")
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def bw(g, saved):
        y, ax = saved
        return (g - np.exp(y) * g.sum(axis=ax, keepdims=True),)

    return _result("log_softmax", (a,), out, bw, (out, axis))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g, saved):
        shape, axs, kd = saved
        if not kd:
            for ax in sorted(axs):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, shape).copy(),)

    return _result("sum", (a,), out, bw, (a.shape, axes, keepdims))


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def bw(g, saved):
        shape, axs, kd, count = saved
        if not kd:
            for ax in sorted(axs):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _result("mean", (a,), out, bw, (a.shape, axes, keepdims, n))


def reduce_max(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient flows to the first max position per slice."""
    ax = axis % a.ndim
    idx = np.argmax(a.data, axis=ax)
    out = np.take_along_axis(a.data, np.expand_dims(idx, ax), axis=ax)
    if not keepdims:
        out = np.squeeze(out, axis=ax)

    def bw(g, saved):
        shape, axx, kd, indices = saved
        if not kd:
            g = np.expand_dims(g, axx)
        dx = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(dx, np.expand_dims(indices, axx), g, axis=axx)
        return (dx,)

    return _result("reduce_max", (a,), out, bw, (a.shape, ax, keepdims, idx))


def reduce_min(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Min along one axis; gradient flows to the first min position per slice."""
    ax = axis % a.ndim
    idx = np.argmin(a.data, axis=ax)
    out = np.take_along_axis(a.data, np.expand_dims(idx, ax), axis=ax)
    if not keepdims:
        out = np.squeeze(out, axis=ax)

    def bw(g, saved):
        shape, axx, kd, indices = saved
        if not kd:
            g = np.expand_dims(g, axx)
        dx = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(dx, np.expand_dims(indices, axx), g, axis=axx)
        return (dx,)

    return _result("reduce_min", (a,), out, bw, (a.shape, ax, keepdims, idx))


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from None

    def bw(g, saved):
        return (g.reshape(saved[0]),)

    return _result("reshape", (a,), out, bw, (a.shape,))


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(int(ax) for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"permute: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(int(i) for i in np.argsort(axes))

    def bw(g, saved):
        return (np.transpose(g, saved[0]),)

    return _result("permute", (a,), np.transpose(a.data, axes), bw, (inverse,))


def index_select(a: Tensor, axis: int, indices) -> Tensor:
    """Gather slices along ``axis``; duplicate indices accumulate in backward."""
    ax = axis % a.ndim
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise DimensionError("index_select expects a 1-d index list")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[ax]):
        raise DimensionError(f"index_select: indices out of range for extent {a.shape[ax]}")
    out = np.take(a.data, idx, axis=ax)

    def bw(g, saved):
        shape, axx, ii = saved
        dx = np.zeros(shape, dtype=g.dtype)
        key = tuple([slice(None)] * axx + [ii])
        np.add.at(dx, key, g)
        return (dx,)

    return _result("index_select", (a,), out, bw, (a.shape, ax, idx))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DimensionError("concat of zero tensors")
    ax = axis % tensors[0].ndim
    out = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]

    def bw(g, saved):
        szs, axx = saved
        splits = np.cumsum(szs)[:-1]
        return tuple(np.split(g, splits, axis=axx))

    return _result("concat", tuple(tensors), out, bw, (sizes, ax))


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-d x 2-d, batched with equal leading dims, or batched @ 2-d."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: operands must be at least 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    if a.ndim == b.ndim:
        if a.shape[:-2] != b.shape[:-2]:
            raise DimensionError(f"matmul: batch dimensions disagree for {a.shape} and {b.shape}")
    elif not (a.ndim > 2 and b.ndim == 2):
        raise DimensionError(f"matmul: unsupported rank combination {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g, saved):
        ad, bd = saved
        da = np.matmul(g, np.swapaxes(bd, -1, -2))
        db = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(da, ad.shape), _unbroadcast(db, bd.shape)

    return _result("matmul", (a, b), out, bw, (a.data, b.data))


# ---------------------------------------------------------------------------
# descriptor standardization (mean 0, std-normalized along one axis)
# ---------------------------------------------------------------------------

def standardize(a: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """(x - mean) / (population_std + eps) along ``axis``.

    Fused so the backward stays finite for (near-)constant descriptors,
    where composing sqrt would blow up at zero variance.
    """
    if eps <= 0:
        raise ContractError("standardize: eps must be positive")
    ax = axis % a.ndim
    x = a.data
    n = x.shape[ax]
    mu = x.mean(axis=ax, keepdims=True)
    centered = x - mu
    std = np.sqrt(np.mean(centered * centered, axis=ax, keepdims=True))
    denom = std + eps
    out = centered / denom

    def bw(g, saved):
        c, s, d, axx, count = saved
        gc = (g - g.mean(axis=axx, keepdims=True)) / d
        proj = (g * c).sum(axis=axx, keepdims=True)
        safe = np.maximum(s, 1e-30)
        return (gc - proj * c / (count * safe * d * d),)

    return _result("standardize", (a,), out, bw, (centered, std, denom, ax, n))


# ---------------------------------------------------------------------------
# conv2d / pooling / batch norm
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with (C_out, C_in, kh, kw) kernels."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d: need 4-d input and kernel, got {x.shape} and {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, kc, kh, kw = weight.shape
    if kc != c_in:
        raise DimensionError(f"conv2d: input has {c_in} channels but kernel expects {kc}")
    s, p = int(stride), int(padding)
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1
    if oh < 1 or ow < 1:
        raise DimensionError(f"conv2d: empty output for input {x.shape}, kernel {weight.shape}, "
                             f"stride {s}, padding {p}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::s, ::s]                      # (N, C, OH, OW, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c_in * kh * kw)
    wmat = weight.data.reshape(c_out, -1)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g, saved):
        cols_s, wmat_s, dims = saved
        (nn_, cin_, h_, w_, cout_, kh_, kw_, s_, p_, oh_, ow_) = dims
        gmat = g.transpose(0, 2, 3, 1).reshape(nn_ * oh_ * ow_, cout_)
        dw = (gmat.T @ cols_s).reshape(cout_, cin_, kh_, kw_)
        dcols = gmat @ wmat_s
        dc = dcols.reshape(nn_, oh_, ow_, cin_, kh_, kw_).transpose(0, 3, 1, 2, 4, 5)
        hp, wp = h_ + 2 * p_, w_ + 2 * p_
        dxp = np.zeros((nn_, cin_, hp, wp), dtype=g.dtype)
        for i in range(kh_):
            for j in range(kw_):
                dxp[:, :, i:i + s_ * oh_:s_, j:j + s_ * ow_:s_] += dc[..., i, j]
        dx = dxp[:, :, p_:p_ + h_, p_:p_ + w_] if p_ else dxp
        if len(inputs) == 3:
            return dx, dw, gmat.sum(axis=0)
        return dx, dw

    saved = (cols, wmat, (n, c_in, h, w, c_out, kh, kw, s, p, oh, ow))
    return _result("conv2d", inputs, out, bw, saved)


def _pool_bins(extent: int, out: int):
    starts = [(i * extent) // out for i in range(out)]
    ends = [((i + 1) * extent + out - 1) // out for i in range(out)]
    return starts, ends


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Mean over bins [floor(i*H/out_h), ceil((i+1)*H/out_h)) per output cell."""
    if x.ndim != 4:
        raise DimensionError(f"adaptive_avg_pool2d: need 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"adaptive_avg_pool2d: zero output extent ({out_h}, {out_w})")
    if out_h > h or out_w > w:
        raise DimensionError(f"adaptive_avg_pool2d: output ({out_h}, {out_w}) exceeds input ({h}, {w})")

    if h % out_h == 0 and w % out_w == 0:
        bh, bw_ = h // out_h, w // out_w
        out = x.data.reshape(n, c, out_h, bh, out_w, bw_).mean(axis=(3, 5))

        def bw_fast(g, saved):
            nn_, cc_, hh_, ww_, oh_, ow_, bhh, bww = saved
            g5 = (g / (bhh * bww))[:, :, :, None, :, None]
            dx = np.broadcast_to(g5, (nn_, cc_, oh_, bhh, ow_, bww)).reshape(nn_, cc_, hh_, ww_)
            return (dx.copy(),)

        return _result("adaptive_avg_pool2d", (x,), out, bw_fast, (n, c, h, w, out_h, out_w, bh, bw_))

    hs, he = _pool_bins(h, out_h)
    ws, we = _pool_bins(w, out_w)
    out = np.empty((n, c, out_h, out_w), dtype=x.data.dtype)
    for i in range(out_h):
        for j in range(out_w):
            out[:, :, i, j] = x.data[:, :, hs[i]:he[i], ws[j]:we[j]].mean(axis=(2, 3))

    def bw_general(g, saved):
        shape, hs_, he_, ws_, we_ = saved
        dx = np.zeros(shape, dtype=g.dtype)
        for i in range(len(hs_)):
            for j in range(len(ws_)):
                area = (he_[i] - hs_[i]) * (we_[j] - ws_[j])
                dx[:, :, hs_[i]:he_[i], ws_[j]:we_[j]] += g[:, :, i:i + 1, j:j + 1] / area
        return (dx,)

    return _result("adaptive_avg_pool2d", (x,), out, bw_general, (x.shape, hs, he, ws, we))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization for NCHW feature maps.

    Training mode normalizes with batch statistics and updates the running
    buffers in place; eval mode normalizes with the running statistics.
    """
    if x.ndim != 4:
        raise DimensionError(f"batch_norm: need 4-d input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batch_norm: gamma/beta must have shape ({c},), got "
                             f"{gamma.shape} and {beta.shape}")
    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mu
        running_var *= (1.0 - momentum)
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    m = x.shape[0] * x.shape[2] * x.shape[3]

    def bw(g, saved):
        xhat_s, inv_s, gamma_s, train_s, m_s = saved
        dgamma = (g * xhat_s).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        coeff = (gamma_s * inv_s)[None, :, None, None]
        if train_s:
            gmean = g.mean(axis=axes)[None, :, None, None]
            gxmean = (g * xhat_s).mean(axis=axes)[None, :, None, None]
            dx = coeff * (g - gmean - xhat_s * gxmean)
        else:
            dx = coeff * g
        return dx, dgamma, dbeta

    return _result("batch_norm", (x, gamma, beta), out, bw, (xhat, inv, gamma.data, training, m))


__all__ = [
    "Tensor", "OpRecord", "no_grad", "grad_enabled", "constant",
    "add", "sub", "mul", "div", "neg", "scale",
    "relu", "sigmoid", "exp", "log", "sqrt", "softmax", "log_softmax",
    "tsum", "tmean", "reduce_max", "reduce_min",
    "reshape", "permute", "index_select", "concat", "matmul",
    "standardize", "conv2d", "adaptive_avg_pool2d", "batch_norm",
]
