"""Dense N-D tensor with reverse-mode automatic differentiation.

Every numerical operation used by the network lives here. Tensors wrap
float64 numpy arrays; each operation records its inputs and a closure
that computes vector-Jacobian products, forming an implicit tape. Calling
``backward()`` on a scalar replays that tape in reverse topological
order, which is deterministic for fixed inputs: same seeds, bitwise-same
gradients (single-threaded).

Broadcasting is deliberately restricted: an operand of an elementwise op
may only broadcast through missing leading axes or a prefix of size-1
leading axes (bias vectors, position embeddings). Anything else needs an
explicit ``expand`` or ``reshape``. Fewer silent shape bugs that way.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float64

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class NumericError(ArithmeticError):
    """Raised on non-finite values where finiteness is required."""


_node_counter = 0


def _next_node_id() -> int:
    global _node_counter
    _node_counter += 1
    return _node_counter


_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """Array node in the differentiation graph.

    Attributes:
        data: float64 ndarray holding the value.
        grad: ndarray of the same shape, populated by backward() for
            every node that requires grad; None before that.
        requires_grad: whether gradients flow into this node.
        node_id: identity of the node within the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = _next_node_id()
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, grad=None):
        """Accumulate gradients of this (usually scalar) node into the graph."""
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=DEFAULT_DTYPE)
            if grad.shape != self.data.shape:
                raise ShapeError(
                    f"seed gradient shape {grad.shape} != value shape {self.data.shape}"
                )
        order = _topo_order(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _topo_order(root: Tensor):
    """Iterative post-order over grad-requiring ancestors; parents first."""
    order = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        entered = False
        for p in parents:
            if p.requires_grad and id(p) not in visited:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                entered = True
                break
        if not entered:
            order.append(node)
            stack.pop()
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents, backward) -> Tensor:
    """Wrap an op result, attaching the tape record when grads are live."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _is_leading_broadcast(shape, out_shape) -> bool:
    """True if shape reaches out_shape via missing or size-1 leading axes only."""
    k = len(out_shape) - len(shape)
    if k < 0:
        return False
    for j in range(len(shape) + 1):
        if all(d == 1 for d in shape[:j]) and tuple(shape[j:]) == tuple(out_shape[k + j:]):
            return True
    return False


def _check_elementwise(a: Tensor, b: Tensor, op: str):
    try:
        out_shape = np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not align")
    for s in (a.data.shape, b.data.shape):
        if not _is_leading_broadcast(s, out_shape):
            raise ShapeError(
                f"{op}: broadcasting {a.data.shape} with {b.data.shape} goes beyond "
                "leading batch axes; reshape or expand explicitly"
            )
    return out_shape


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squash = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if squash:
        g = g.sum(axis=squash, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise suite


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "add")

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "sub")

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "mul")

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)

    def backward(g):
        _accum(x, g * c)

    return _make(x.data * c, (x,), backward)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def backward(g):
        _accum(x, g * mask)

    # np.maximum, not a where() on the mask: NaN must propagate, not
    # silently turn into 0
    return _make(np.maximum(x.data, 0.0), (x,), backward)


def gelu(x) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    x = _as_tensor(x)
    phi = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))

    def backward(g):
        density = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        _accum(x, g * (phi + x.data * density))

    return _make(x.data * phi, (x,), backward)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        _accum(x, g * s * (1.0 - s))

    return _make(s, (x,), backward)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    e = np.exp(x.data)

    def backward(g):
        _accum(x, g * e)

    return _make(e, (x,), backward)


def log(x) -> Tensor:
    x = _as_tensor(x)

    def backward(g):
        _accum(x, g / x.data)

    return _make(np.log(x.data), (x,), backward)


def abs_(x) -> Tensor:
    x = _as_tensor(x)

    def backward(g):
        _accum(x, g * np.sign(x.data))

    return _make(np.abs(x.data), (x,), backward)


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes through wherever lo <= x <= hi."""
    x = _as_tensor(x)
    mask = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        _accum(x, g * mask)

    return _make(np.clip(x.data, lo, hi), (x,), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax: non-finite input")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        inner = np.sum(g * s, axis=axis, keepdims=True)
        _accum(x, s * (g - inner))

    return _make(s, (x,), backward)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    old = x.data.shape

    def backward(g):
        _accum(x, g.reshape(old))

    return _make(x.data.reshape(shape), (x,), backward)


def transpose(x, axes) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accum(x, g.transpose(inverse))

    return _make(x.data.transpose(axes), (x,), backward)


def swap_last_two(x) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    return transpose(x, axes)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    base = list(tensors[0].data.shape)
    for t in tensors[1:]:
        other = list(t.data.shape)
        if len(other) != len(base) or any(
            o != b for i, (o, b) in enumerate(zip(other, base)) if i != axis % len(base)
        ):
            raise ShapeError(
                f"concat: non-axis extents differ ({tensors[0].data.shape} vs {t.data.shape})"
            )
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            key = [slice(None)] * g.ndim
            key[axis] = slice(start, stop)
            _accum(t, g[tuple(key)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def take_slice(x, key) -> Tensor:
    """Slice with a tuple of plain slice objects; backward scatters zeros elsewhere."""
    x = _as_tensor(x)
    if not isinstance(key, tuple):
        key = (key,)
    for k in key:
        if not isinstance(k, slice):
            raise ShapeError("take_slice accepts slice objects only")

    def backward(g):
        full = np.zeros_like(x.data)
        full[key] = g
        _accum(x, full)

    return _make(x.data[key].copy(), (x,), backward)


def expand(x, axis: int, n: int) -> Tensor:
    """Repeat a size-1 axis n times (the explicit form of broadcasting)."""
    x = _as_tensor(x)
    if x.data.shape[axis] != 1:
        raise ShapeError(f"expand: axis {axis} has extent {x.data.shape[axis]}, want 1")

    def backward(g):
        _accum(x, g.sum(axis=axis, keepdims=True))

    return _make(np.repeat(x.data, n, axis=axis), (x,), backward)


def sum_along(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = axis if axis is None or isinstance(axis, tuple) else (axis,)

    def backward(g):
        if axes is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axes)
        _accum(x, np.broadcast_to(gg, x.data.shape).copy())

    return _make(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    return scale(sum_along(x, axis=axis, keepdims=keepdims), 1.0 / count)


def max_along(x, axis: int, keepdims: bool = False) -> Tensor:
    """Max over one axis; subgradient routes to the first argmax (ties)."""
    x = _as_tensor(x)
    idx = np.argmax(x.data, axis=axis)
    out = np.max(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), gg, axis=axis)
        _accum(x, full)

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ ({a.data.shape} @ {b.data.shape})")
    try:
        np.broadcast_shapes(a.data.shape[:-2], b.data.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch extents differ ({a.data.shape} @ {b.data.shape})")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(np.matmul(a.data, b.data), (a, b), backward)


# ---------------------------------------------------------------------------
# normalization


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis only; no statistic crosses batch or tokens."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: affine shapes {gain.data.shape}/{bias.data.shape} want ({d},)"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=lead))
        _accum(bias, g.sum(axis=lead))
        gx = g * gain.data
        term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(
            axis=-1, keepdims=True
        )
        _accum(x, term * inv)

    return _make(xhat * gain.data + bias.data, (x, gain, bias), backward)


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of (B,C,H,W); running stats updated in training.

    Training mode normalizes with biased batch statistics and folds them
    into the running arrays in place: r = (1-m)*r + m*batch. Eval mode
    normalizes with the running statistics (no statistic gradients).
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 4:
        raise ShapeError(f"batch_norm expects (B,C,H,W), got {x.data.shape}")
    b_, c, h, w = x.data.shape
    if training:
        if b_ == 1:
            import warnings

            warnings.warn("batch_norm: batch size 1 in training mode, variance degenerate")
        axes = (0, 2, 3)
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]

    def backward(g):
        _accum(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        _accum(beta, g.sum(axis=(0, 2, 3)))
        gi = g * gamma.data[None, :, None, None]
        if training:
            n = b_ * h * w
            s1 = gi.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (gi * xhat).sum(axis=(0, 2, 3), keepdims=True)
            gx = (gi - s1 / n - xhat * s2 / n) * inv[None, :, None, None]
        else:
            gx = gi * inv[None, :, None, None]
        _accum(x, gx)

    return _make(xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None],
                 (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# convolution and patch extraction


def _sliding_patches(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """(B,C,Hp,Wp) -> (B,C,Ho,Wo,kh,kw) strided view of patches."""
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return windows[:, :, ::sh, ::sw]


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. Output spatial size floor((H+2p-k)/s)+1."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: want (B,C,H,W) and (O,C,kh,kw), got {x.data.shape}, {weight.data.shape}")
    b_, c, h, w = x.data.shape
    c_out, c_in, kh, kw = weight.data.shape
    if c != c_in:
        raise ShapeError(f"conv2d: input channels {c} != kernel channels {c_in}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: non-positive output grid {ho}x{wo}")
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    patches = _sliding_patches(xp, kh, kw, stride, stride)
    out = np.einsum("bchwij,ocij->bohw", patches, weight.data, optimize=True)
    parents = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (c_out,):
            raise ShapeError(f"conv2d: bias shape {bias.data.shape} want ({c_out},)")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        _accum(weight, np.einsum("bohw,bchwij->ocij", g, patches, optimize=True))
        if bias is not None:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            gpatch = np.einsum("bohw,ocij->bchwij", g, weight.data, optimize=True)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                        gpatch[:, :, :, :, i, j]
                    )
            if padding:
                gxp = gxp[:, :, padding : padding + h, padding : padding + w]
            _accum(x, gxp)

    return _make(out, tuple(parents), backward)


def unfold(x, kernel: int, stride: int, padding: int) -> Tensor:
    """Soft split: (B,C,H,W) -> (B, L, k*k*C) token sequence.

    Each token is one k x k patch flattened in (row, col, channel) order;
    L is the output-grid area.
    """
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"unfold expects (B,C,H,W), got {x.data.shape}")
    b_, c, h, w = x.data.shape
    ho = (h + 2 * padding - kernel) // stride + 1
    wo = (w + 2 * padding - kernel) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"unfold: non-positive output grid {ho}x{wo}")
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    patches = _sliding_patches(xp, kernel, kernel, stride, stride)
    # (B,C,Ho,Wo,kh,kw) -> (B,Ho,Wo,kh,kw,C) -> (B, L, k*k*C)
    tokens = patches.transpose(0, 2, 3, 4, 5, 1).reshape(b_, ho * wo, kernel * kernel * c)

    def backward(g):
        gpatch = g.reshape(b_, ho, wo, kernel, kernel, c).transpose(0, 5, 1, 2, 3, 4)
        gxp = np.zeros_like(xp)
        for i in range(kernel):
            for j in range(kernel):
                gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                    gpatch[:, :, :, :, i, j]
                )
        if padding:
            gxp = gxp[:, :, padding : padding + h, padding : padding + w]
        _accum(x, gxp)

    return _make(np.ascontiguousarray(tokens), (x,), backward)


# ---------------------------------------------------------------------------
# bilinear upsampling


def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic interpolation matrix, half-pixel (align-corners=false)."""
    m = np.zeros((n_out, n_in), dtype=DEFAULT_DTYPE)
    ratio = n_in / n_out
    for o in range(n_out):
        src = (o + 0.5) * ratio - 0.5
        i0 = int(np.floor(src))
        frac = src - i0
        lo = min(max(i0, 0), n_in - 1)
        hi = min(max(i0 + 1, 0), n_in - 1)
        m[o, lo] += 1.0 - frac
        m[o, hi] += frac
    return m


_bilinear_cache: dict = {}


def _bilinear_cached(n_in: int, n_out: int) -> np.ndarray:
    key = (n_in, n_out)
    if key not in _bilinear_cache:
        _bilinear_cache[key] = _bilinear_matrix(n_in, n_out)
    return _bilinear_cache[key]


def upsample_bilinear(x, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of (B,C,H,W) to (B,C,out_h,out_w); upscaling only."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample_bilinear expects (B,C,H,W), got {x.data.shape}")
    b_, c, h, w = x.data.shape
    if out_h < h or out_w < w:
        raise ShapeError(f"upsample_bilinear: downscaling {h}x{w} -> {out_h}x{out_w} unsupported")
    mh = _bilinear_cached(h, out_h)
    mw = _bilinear_cached(w, out_w)
    t = np.matmul(x.data, mw.T)
    out = np.matmul(mh, t)

    def backward(g):
        gt = np.matmul(mh.T, g)
        _accum(x, np.matmul(gt, mw))

    return _make(out, (x,), backward)
