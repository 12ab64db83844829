"""Reverse-mode automatic differentiation on dense numpy arrays.

The engine is a define-by-run Wengert list: every primitive records its
parents and a vector-Jacobian rule. The rules are themselves written in
terms of primitives, so gradients can be differentiated again - which is
what the Wasserstein gradient penalty needs (parameter gradients of an
input-gradient norm).

Only the operator set used by the networks and losses is implemented.
Training runs in float32; gradient-check tests run in float64.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for engine failures."""


class ShapeError(AutodiffError):
    """Operand shapes are invalid for the requested operation."""


class NumericsError(AutodiffError):
    """A NaN or Inf was produced where finite values are required."""


# ---------------------------------------------------------------------------
# grad mode / tape
# ---------------------------------------------------------------------------


class _ThreadState(threading.local):
    """Per-thread grad mode and active tape (concurrent inference is pure)."""

    def __init__(self):
        self.grad_enabled = True
        self.tape: Optional["Tape"] = None


_STATE = _ThreadState()


class no_grad:
    """Context manager: ops executed inside build no graph."""

    def __enter__(self):
        self._prev = _STATE.grad_enabled
        _STATE.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _STATE.grad_enabled = self._prev
        return False


class enable_grad:
    """Context manager: re-enables graph construction (used by create_graph)."""

    def __enter__(self):
        self._prev = _STATE.grad_enabled
        _STATE.grad_enabled = True
        return self

    def __exit__(self, *exc):
        _STATE.grad_enabled = self._prev
        return False


@dataclass
class TapeEntry:
    op: str
    inputs: tuple
    output: "Tensor"
    recompute: Callable[..., np.ndarray]


class Tape:
    """Ordered record of primitive applications.

    Creation order is a topological order by construction (an op can only
    consume tensors that already exist). ``replay`` re-executes every entry
    from the recorded input values and checks bit-identical reproduction.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self):
        self._prev = _STATE.tape
        _STATE.tape = self
        return self

    def __exit__(self, *exc):
        _STATE.tape = self._prev
        return False

    def __len__(self):
        return len(self.entries)

    def replay(self) -> bool:
        """Re-run all recorded ops; True iff every output is reproduced bitwise."""
        values: dict[int, np.ndarray] = {}
        for e in self.entries:
            args = [values.get(id(t), t.data) for t in e.inputs]
            out = e.recompute(*args)
            if out.tobytes() != values.get(id(e.output), e.output.data).tobytes():
                return False
            values[id(e.output)] = out
        return True

    def check_topological(self) -> bool:
        seen: set[int] = set()
        produced = {id(e.output) for e in self.entries}
        for e in self.entries:
            for t in e.inputs:
                if id(t) in produced and id(t) not in seen:
                    return False
            seen.add(id(e.output))
        return True


# ---------------------------------------------------------------------------
# tensor
# ---------------------------------------------------------------------------


class Tensor:
    """A dense n-d array, optionally part of the differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._vjps: tuple = ()
        self.op = "leaf"
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def assert_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NumericsError(f"non-finite values in {what} (op={self.op})")
        return self

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag}, op={self.op})"

    # light operator sugar; all arithmetic routes through module-level ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _node(data: np.ndarray, op: str, parents: tuple, vjps: tuple,
          recompute: Optional[Callable] = None) -> Tensor:
    """Wrap an op result; attaches graph edges when grad mode is on."""
    track = _STATE.grad_enabled and any(p.requires_grad for p in parents)
    t = Tensor(data, requires_grad=track)
    if track:
        t._parents = parents
        t._vjps = vjps
        t.op = op
    else:
        t.op = op
    if _STATE.tape is not None and recompute is not None:
        _STATE.tape.entries.append(TapeEntry(op, parents, t, recompute))
    return t


def parameter(data, name: str = "") -> Tensor:
    t = Tensor(np.asarray(data), requires_grad=True, name=name)
    t.assert_finite(f"parameter {name!r}")
    return t


# ---------------------------------------------------------------------------
# shape-manipulation primitives
# ---------------------------------------------------------------------------


def _np_sum_to(data: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``data`` (a broadcast result) back to ``shape``."""
    extra = data.ndim - len(shape)
    if extra > 0:
        data = data.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (d, s) in enumerate(zip(data.shape, shape)) if s == 1 and d != 1)
    if axes:
        data = data.sum(axis=axes, keepdims=True)
    if data.shape != tuple(shape):
        data = data.reshape(shape)
    return data


def sum_to_shape(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if t.shape == shape:
        return t
    src = t.shape

    def f(d):
        return _np_sum_to(d, shape)

    return _node(f(t.data), "sum_to_shape", (t,),
                 (lambda g: broadcast_to(g, src),), f)


def broadcast_to(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if t.shape == shape:
        return t
    src = t.shape

    def f(d):
        return np.broadcast_to(d, shape)

    return _node(f(t.data), "broadcast_to", (t,),
                 (lambda g: sum_to_shape(g, src),), f)


def reshape(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    src = t.shape

    def f(d):
        return np.reshape(d, shape)

    return _node(f(t.data), "reshape", (t,),
                 (lambda g: reshape(g, src),), f)


def transpose(t: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def f(d):
        return np.transpose(d, axes)  # view; BLAS consumers handle strides

    return _node(f(t.data), "transpose", (t,),
                 (lambda g: transpose(g, inv),), f)


def narrow(t: Tensor, axis: int, start: int, length: int) -> Tensor:
    total = t.shape[axis]
    if start < 0 or start + length > total:
        raise ShapeError(f"narrow [{start}:{start + length}] outside axis of size {total}")
    sl = [slice(None)] * t.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def f(d):
        return d[sl]

    return _node(f(t.data), "narrow", (t,),
                 (lambda g: pad_axis(g, axis, start, total - start - length),), f)


def pad_axis(t: Tensor, axis: int, before: int, after: int) -> Tensor:
    length = t.shape[axis]
    pads = [(0, 0)] * t.ndim
    pads[axis] = (before, after)

    def f(d):
        return np.pad(d, pads)

    return _node(f(t.data), "pad_axis", (t,),
                 (lambda g: narrow(g, axis, before, length),), f)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    for t in tensors[1:]:
        a, b = list(tensors[0].shape), list(t.shape)
        a[axis] = b[axis] = 0
        if a != b:
            raise ShapeError(f"concat shape mismatch: {tensors[0].shape} vs {t.shape}")
    offsets = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def f(*ds):
        return np.concatenate(ds, axis=axis)

    vjps = tuple(
        (lambda g, o=int(offsets[i]), n=t.shape[axis]: narrow(g, axis, o, n))
        for i, t in enumerate(tensors)
    )
    return _node(f(*[t.data for t in tensors]), "concat", tensors, vjps, f)


# ---------------------------------------------------------------------------
# elementwise / reduction primitives
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def f(da, db):
        return da + db

    return _node(f(a.data, b.data), "add", (a, b),
                 (lambda g, s=a.shape: sum_to_shape(g, s),
                  lambda g, s=b.shape: sum_to_shape(g, s)), f)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def f(da, db):
        return da - db

    return _node(f(a.data, b.data), "sub", (a, b),
                 (lambda g, s=a.shape: sum_to_shape(g, s),
                  lambda g, s=b.shape: sum_to_shape(scale(g, -1.0), s)), f)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def f(da, db):
        return da * db

    return _node(f(a.data, b.data), "mul", (a, b),
                 (lambda g, s=a.shape: sum_to_shape(mul(g, b), s),
                  lambda g, s=b.shape: sum_to_shape(mul(g, a), s)), f)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def f(da, db):
        return da / db

    return _node(f(a.data, b.data), "div", (a, b),
                 (lambda g, s=a.shape: sum_to_shape(div(g, b), s),
                  lambda g, s=b.shape: sum_to_shape(scale(div(mul(g, a), square(b)), -1.0), s)),
                 f)


def scale(t, c: float) -> Tensor:
    t = as_tensor(t)
    c = float(c)

    def f(d):
        return d * c

    return _node(f(t.data), "scale", (t,), (lambda g: scale(g, c),), f)


def add_const(t, c: float) -> Tensor:
    t = as_tensor(t)
    c = float(c)

    def f(d):
        return d + c

    return _node(f(t.data), "add_const", (t,), (lambda g: g,), f)


def square(t) -> Tensor:
    t = as_tensor(t)

    def f(d):
        return d * d

    return _node(f(t.data), "square", (t,),
                 (lambda g: scale(mul(g, t), 2.0),), f)


def pow_const(t, c: float) -> Tensor:
    t = as_tensor(t)
    c = float(c)

    def f(d):
        return d ** c

    return _node(f(t.data), "pow_const", (t,),
                 (lambda g: mul(g, scale(pow_const(t, c - 1.0), c)),), f)


def sqrt(t) -> Tensor:
    # vjp references the input, not the output, so graphs stay acyclic and
    # are freed by reference counting as soon as a step ends
    t = as_tensor(t)

    def f(d):
        return np.sqrt(d)

    return _node(f(t.data), "sqrt", (t,),
                 (lambda g: scale(mul(g, pow_const(t, -0.5)), 0.5),), f)


def abs_(t) -> Tensor:
    t = as_tensor(t)

    def f(d):
        return np.abs(d)

    vjps = (_masked_vjp(np.sign(t.data)),) if _tracking(t) else ()
    return _node(f(t.data), "abs", (t,), vjps, f)


def _masked_vjp(mask: np.ndarray):
    m = Tensor(mask)
    return lambda g: mul(g, m)


def _tracking(t: Tensor) -> bool:
    return _STATE.grad_enabled and t.requires_grad


def relu(t) -> Tensor:
    t = as_tensor(t)

    def f(d):
        return np.maximum(d, 0)

    vjps = ((_masked_vjp((t.data > 0).astype(t.data.dtype)),)
            if _tracking(t) else ())
    return _node(f(t.data), "relu", (t,), vjps, f)


def leaky_relu(t, negative_slope: float = 0.2) -> Tensor:
    t = as_tensor(t)
    s = float(negative_slope)

    def f(d):
        return np.maximum(d, d * s)  # valid for 0 <= slope < 1

    vjps = ()
    if _tracking(t):
        mask = np.where(t.data > 0, t.data.dtype.type(1), t.data.dtype.type(s))
        vjps = (_masked_vjp(mask),)
    return _node(f(t.data), "leaky_relu", (t,), vjps, f)


def clamp(t, lo: float, hi: float) -> Tensor:
    t = as_tensor(t)

    def f(d):
        return np.clip(d, lo, hi)

    vjps = ()
    if _tracking(t):
        mask = ((t.data >= lo) & (t.data <= hi)).astype(t.data.dtype)
        vjps = (_masked_vjp(mask),)
    return _node(f(t.data), "clamp", (t,), vjps, f)


def tanh(t) -> Tensor:
    t = as_tensor(t)

    def f(d):
        return np.tanh(d)

    def vjp(g):
        y = tanh(t)  # rebuilt from the input: keeps the graph acyclic
        return mul(g, add_const(scale(square(y), -1.0), 1.0))

    return _node(f(t.data), "tanh", (t,), (vjp,), f)


def _np_sigmoid(d: np.ndarray) -> np.ndarray:
    # numerically stable two-sided form
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(t) -> Tensor:
    t = as_tensor(t)

    def vjp(g):
        y = sigmoid(t)
        return mul(g, mul(y, add_const(scale(y, -1.0), 1.0)))

    return _node(_np_sigmoid(t.data), "sigmoid", (t,), (vjp,), _np_sigmoid)


def sum_(t, axis=None, keepdims: bool = False) -> Tensor:
    t = as_tensor(t)
    src = t.shape
    if axis is None:
        axes = tuple(range(t.ndim))
    elif isinstance(axis, int):
        axes = (axis,)
    else:
        axes = tuple(axis)
    kshape = tuple(1 if i in axes else s for i, s in enumerate(src))

    def f(d):
        return np.asarray(d.sum(axis=axes, keepdims=keepdims))

    def vjp(g):
        return broadcast_to(reshape(g, kshape), src)

    return _node(f(t.data), "sum", (t,), (vjp,), f)


def mean(t, axis=None, keepdims: bool = False) -> Tensor:
    t = as_tensor(t)
    if axis is None:
        n = t.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([t.shape[i] for i in axes]))
    return scale(sum_(t, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear-algebra / convolution primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul requires >=2-d operands")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner-dim mismatch: {a.shape} @ {b.shape}")

    def f(da, db):
        return np.matmul(da, db)

    def _swap(t: Tensor) -> Tensor:
        axes = list(range(t.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return transpose(t, axes)

    return _node(f(a.data, b.data), "matmul", (a, b),
                 (lambda g, s=a.shape: sum_to_shape(matmul(g, _swap(b)), s),
                  lambda g, s=b.shape: sum_to_shape(matmul(_swap(a), g), s)), f)


def _conv_out_size(n: int, k: int, s: int, p: int) -> int:
    out = (n + 2 * p - k) // s + 1
    if out <= 0:
        raise ShapeError(f"conv output size {out} for input {n}, kernel {k}, stride {s}, pad {p}")
    return out


def _np_im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int, ph: int, pw: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh = _conv_out_size(h, kh, sh, ph)
    ow = _conv_out_size(w, kw, sw, pw)
    if ph or pw:
        xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), x.dtype)
        xp[:, :, ph:ph + h, pw:pw + w] = x
    else:
        xp = x
    cols = np.empty((n, c, kh, kw, oh, ow), x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _np_col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int,
               sh: int, sw: int, ph: int, pw: int) -> np.ndarray:
    n, c, h, w = x_shape
    oh = _conv_out_size(h, kh, sh, ph)
    ow = _conv_out_size(w, kw, sw, pw)
    cols6 = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += cols6[:, :, i, j]
    if ph or pw:
        return xp[:, :, ph:ph + h, pw:pw + w]
    return xp


def im2col(x: Tensor, kh: int, kw: int, stride: int = 1, padding: int = 0) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"im2col expects NCHW input, got {x.shape}")
    x_shape = x.shape

    def f(d):
        return _np_im2col(d, kh, kw, stride, stride, padding, padding)

    return _node(f(x.data), "im2col", (x,),
                 (lambda g: col2im(g, x_shape, kh, kw, stride, padding),), f)


def col2im(cols: Tensor, x_shape: tuple, kh: int, kw: int,
           stride: int = 1, padding: int = 0) -> Tensor:
    cols = as_tensor(cols)

    def f(d):
        return _np_col2im(d, tuple(x_shape), kh, kw, stride, stride, padding, padding)

    return _node(f(cols.data), "col2im", (cols,),
                 (lambda g: im2col(g, kh, kw, stride, padding),), f)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation, NCHW input, (OC, IC, KH, KW) kernel."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d tensors, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    if c != ic:
        raise ShapeError(f"conv2d channel mismatch: input {c}, kernel {ic}")
    oh = _conv_out_size(h, kh, stride, padding)
    ow = _conv_out_size(wd, kw, stride, padding)
    cols = im2col(x, kh, kw, stride, padding)            # (N, C*KH*KW, OH*OW)
    wmat = reshape(w, (oc, ic * kh * kw))
    out = matmul(wmat, cols)                             # (N, OC, OH*OW)
    out = reshape(out, (n, oc, oh, ow))
    if b is not None:
        out = add(out, reshape(b, (1, oc, 1, 1)))
    return out


def dense(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Fully connected layer: (N, F_in) @ (F_in, F_out) + b."""
    x, w = as_tensor(x), as_tensor(w)
    out = matmul(x, w)
    if b is not None:
        out = add(out, reshape(b, (1, w.shape[1])))
    return out


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x spatial upsampling of an NCHW tensor."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    out = reshape(x, (n, c, h, 1, w, 1))
    out = broadcast_to(out, (n, c, h, 2, w, 2))
    return reshape(out, (n, c, 2 * h, 2 * w))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: Tensor, running_var: Tensor,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W) of an NCHW tensor.

    Running statistics are updated in place during training and used verbatim
    at inference. Built from differentiable primitives, so it backpropagates
    without a bespoke rule.
    """
    x = as_tensor(x)
    if training:
        mu = mean(x, axis=(0, 2, 3), keepdims=True)
        var = mean(square(sub(x, mu)), axis=(0, 2, 3), keepdims=True)
        with no_grad():
            running_mean.data[...] = (1 - momentum) * running_mean.data + momentum * mu.data
            running_var.data[...] = (1 - momentum) * running_var.data + momentum * var.data
    else:
        mu, var = running_mean, running_var
    xn = div(sub(x, mu), sqrt(add_const(var, eps)))
    return add(mul(xn, gamma), beta)


# ---------------------------------------------------------------------------
# op registry (uniform recording surface)
# ---------------------------------------------------------------------------

_OPS: dict[str, Callable] = {
    "conv2d": lambda inputs, attrs: conv2d(*inputs, **attrs),
    "conv2d_transpose_or_upsample": lambda inputs, attrs: upsample_nearest2x(*inputs),
    "dense": lambda inputs, attrs: dense(*inputs, **attrs),
    "leaky_relu": lambda inputs, attrs: leaky_relu(*inputs, **attrs),
    "relu": lambda inputs, attrs: relu(*inputs),
    "tanh": lambda inputs, attrs: tanh(*inputs),
    "sigmoid": lambda inputs, attrs: sigmoid(*inputs),
    "batch_norm": lambda inputs, attrs: batch_norm(*inputs, **attrs),
    "add": lambda inputs, attrs: add(*inputs),
    "mul": lambda inputs, attrs: mul(*inputs),
    "concat": lambda inputs, attrs: concat(inputs, **attrs),
    "reshape": lambda inputs, attrs: reshape(*inputs, **attrs),
    "mean": lambda inputs, attrs: mean(*inputs, **attrs),
    "sum": lambda inputs, attrs: sum_(*inputs, **attrs),
    "abs": lambda inputs, attrs: abs_(*inputs),
    "square": lambda inputs, attrs: square(*inputs),
    "sqrt": lambda inputs, attrs: sqrt(*inputs),
    "clamp": lambda inputs, attrs: clamp(*inputs, **attrs),
}


def record(op_kind: str, inputs: Sequence[Tensor], attrs: Optional[dict] = None) -> Tensor:
    """Apply a primitive by name. Raises on unknown kinds or bad shapes."""
    if op_kind not in _OPS:
        raise AutodiffError(f"unknown op_kind {op_kind!r}")
    try:
        return _OPS[op_kind](tuple(as_tensor(t) for t in inputs), attrs or {})
    except (ValueError, TypeError) as exc:
        raise ShapeError(f"{op_kind}: {exc}") from exc


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    return order


def grad(output: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar ``output`` w.r.t. each tensor in ``wrt``.

    Tensors in ``wrt`` that the output does not depend on get an exact-zero
    gradient. With ``create_graph`` the returned tensors participate in the
    graph so they can be differentiated again.
    """
    if output.size != 1:
        raise ShapeError(f"grad requires a scalar output, got shape {output.shape}")
    order = _toposort(output)
    adjoint: dict[int, Tensor] = {id(output): Tensor(np.ones_like(output.data))}
    wanted = {id(w): i for i, w in enumerate(wrt)}
    results: list[Optional[Tensor]] = [None] * len(wrt)

    ctx = enable_grad() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue
            if id(node) in wanted:
                results[wanted[id(node)]] = g
            for p, vjp in zip(node._parents, node._vjps):
                if not p.requires_grad:
                    continue
                contrib = vjp(g)
                prev = adjoint.get(id(p))
                adjoint[id(p)] = contrib if prev is None else add(prev, contrib)

    return [r if r is not None else Tensor(np.zeros_like(w.data))
            for r, w in zip(results, wrt)]


def backward(loss: Tensor, leaves: Sequence[Tensor]) -> dict[int, np.ndarray]:
    """Populate ``.grad`` on each leaf with the gradient of a scalar loss.

    Raises ``NumericsError`` if any accumulated gradient is non-finite.
    """
    gs = grad(loss, leaves)
    out: dict[int, np.ndarray] = {}
    for leaf, g in zip(leaves, gs):
        if not np.all(np.isfinite(g.data)):
            raise NumericsError(f"non-finite gradient for leaf {leaf.name!r}")
        leaf.grad = g.data
        out[id(leaf)] = g.data
    return out


def grad_wrt_input_differentiable(f_output: Tensor, input_: Tensor) -> Tensor:
    """Input gradient as a graph node (differentiable a second time)."""
    return grad(f_output, [input_], create_graph=True)[0]


# ---------------------------------------------------------------------------
# numeric checking
# ---------------------------------------------------------------------------


def finite_difference_check(scalar_fn: Callable[[Tensor], Tensor],
                            point: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Reports the error; never raises on disagreement. ``point`` should be
    float64 for meaningful tolerances.
    """
    point = np.asarray(point, dtype=np.float64)
    x = Tensor(point.copy(), requires_grad=True)
    analytic = grad(scalar_fn(x), [x])[0].data
    worst = 0.0
    flat = point.reshape(-1)
    for i in range(flat.size):
        dp = flat.copy()
        dm = flat.copy()
        dp[i] += h
        dm[i] -= h
        # evaluated on non-leaf tensors; the function may still build graphs
        # internally (e.g. penalties that differentiate an inner score)
        fp = scalar_fn(Tensor(dp.reshape(point.shape))).item()
        fm = scalar_fn(Tensor(dm.reshape(point.shape))).item()
        numeric = (fp - fm) / (2.0 * h)
        a = float(analytic.reshape(-1)[i])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam state for an ordered parameter list."""

    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def ensure(self, params: Sequence[Tensor]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in params]
            self.v = [np.zeros_like(p.data) for p in params]
        if len(self.m) != len(params):
            raise AutodiffError("AdamState does not match parameter list")


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray],
              state: AdamState) -> Sequence[Tensor]:
    """One in-place Adam update; advances the step counter."""
    state.ensure(params)
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.data if isinstance(g, Tensor) else np.asarray(g)
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient in adam_step for {p.name!r}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
