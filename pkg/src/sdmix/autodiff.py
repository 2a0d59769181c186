"""Dense double-precision tensors with a define-by-run reverse-mode tape.

A :class:`Tape` is created fresh for every differentiated computation.  Leaf
tensors are registered with :meth:`Tape.leaf`; every primitive applied to a
tensor that lives on a tape appends one record to that tape.  Tensors that are
not on a tape (plain constants, or the result of :func:`detach`) never receive
gradients.

Gradient maps are plain dicts ``{node_id: ndarray}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class GradientError(RuntimeError):
    pass


class Tensor:
    """A float64 array, optionally bound to a node on a :class:`Tape`."""

    __slots__ = ("value", "node_id", "tape")

    def __init__(self, value, node_id: int | None = None, tape: Tape | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.node_id = node_id
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def recorded(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def __repr__(self) -> str:
        where = f", node={self.node_id}" if self.recorded else ""
        return f"Tensor(shape={self.shape}{where})"


@dataclass
class Record:
    kind: str
    inputs: tuple[int, ...]
    output: int
    # maps the output cotangent to one cotangent per input (None = no flow)
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None = None


@dataclass
class Tape:
    records: list[Record] = field(default_factory=list)
    _shapes: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def _new_node(self, shape) -> int:
        node = len(self._shapes)
        self._shapes[node] = tuple(shape)
        return node

    def leaf(self, value) -> Tensor:
        t = Tensor(value)
        t.node_id = self._new_node(t.shape)
        t.tape = self
        self.records.append(Record("leaf", (), t.node_id))
        return t

    def record(self, kind: str, inputs: list[Tensor], out_value: np.ndarray, vjp) -> Tensor:
        on_tape = [x for x in inputs if x.tape is not None]
        for x in on_tape:
            if x.tape is not self:
                raise GradientError(f"{kind}: inputs live on different tapes")
        node = self._new_node(out_value.shape)
        ids = tuple(x.node_id if x.tape is self else -1 for x in inputs)
        self.records.append(Record(kind, ids, node, vjp))
        return Tensor(out_value, node, self)

    @property
    def leaves(self) -> list[int]:
        return [r.output for r in self.records if r.kind == "leaf"]

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> dict[int, np.ndarray]:
        if loss.tape is not self:
            raise GradientError("backward: loss is detached from this tape")
        if seed is None:
            if loss.value.size != 1:
                raise GradientError(f"backward: loss must be scalar, got shape {loss.shape}")
            seed = np.ones_like(loss.value)
        cot: dict[int, np.ndarray] = {loss.node_id: np.asarray(seed, dtype=np.float64)}
        grads: dict[int, np.ndarray] = {}
        # node id == record index, so reverse record order is a reverse
        # topological order and each node is visited once
        for rec in reversed(self.records[: loss.node_id + 1]):
            g = cot.pop(rec.output, None)
            if g is None:
                continue
            if rec.kind == "leaf":
                grads[rec.output] = g
                continue
            parts = rec.vjp(g)
            for nid, gi in zip(rec.inputs, parts):
                if nid < 0 or gi is None:
                    continue
                if nid in cot:
                    cot[nid] = cot[nid] + gi
                else:
                    cot[nid] = gi
        for nid in self.leaves:
            if nid not in grads:
                grads[nid] = np.zeros(self._shapes[nid])
        return grads

    def reaches(self, loss: Tensor, node_id: int) -> bool:
        """True when ``node_id`` is an ancestor of ``loss`` on this tape."""
        live = {loss.node_id}
        for rec in reversed(self.records):
            if rec.output in live:
                live.update(i for i in rec.inputs if i >= 0)
        return node_id in live


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Gradient of a scalar ``loss`` with respect to every leaf of its tape."""
    if loss.tape is None:
        raise GradientError("backward: loss is detached (not recorded on any tape)")
    return loss.tape.backward(loss)


def input_gradient(score: Tensor, x: Tensor) -> np.ndarray:
    """Gradient of ``score`` with respect to the leaf ``x``.

    Raises :class:`GradientError` when ``score`` does not depend on ``x``
    rather than returning zeros, so wiring mistakes are not silent.
    """
    if score.tape is None or x.tape is not score.tape:
        raise GradientError("input_gradient: no dependency (score and x are not on the same tape)")
    if not score.tape.reaches(score, x.node_id):
        raise GradientError(f"input_gradient: no dependency of score on node {x.node_id}")
    return score.tape.backward(score)[x.node_id]


def finite_difference(f: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of the gradient of scalar ``f`` at ``x``."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(x))
        flat[i] = orig - step
        lo = float(f(x))
        flat[i] = orig
        g[i] = (hi - lo) / (2.0 * step)
    return grad


def detach(x: Tensor) -> Tensor:
    return Tensor(x.value.copy())


# ---------------------------------------------------------------------------
# primitives


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(kind: str, inputs: list[Tensor], out: np.ndarray, vjp) -> Tensor:
    tape = next((x.tape for x in inputs if x.tape is not None), None)
    if tape is None:
        return Tensor(out)
    return tape.record(kind, inputs, out, vjp)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def conv_h1(x, weight, bias, stride: int = 1) -> Tensor:
    """Valid convolution of ``(N, Cin, 1, L)`` with ``(Cout, Cin, 1, k)`` kernels."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    xv, wv = x.value, weight.value
    if xv.ndim != 4 or xv.shape[2] != 1 or wv.ndim != 4 or wv.shape[2] != 1 or xv.shape[1] != wv.shape[1]:
        raise ShapeError(f"conv_h1: input shape {xv.shape} incompatible with kernel shape {wv.shape}")
    if bias.shape != (wv.shape[0],):
        raise ShapeError(f"conv_h1: bias shape {bias.shape} does not match kernel shape {wv.shape}")
    k = wv.shape[3]
    L = xv.shape[3]
    if k > L:
        raise ShapeError(f"conv_h1: kernel shape {wv.shape} wider than input shape {xv.shape}")
    cols = sliding_window_view(xv[:, :, 0, :], k, axis=2)[:, :, ::stride, :]  # (N, Cin, Lout, k)
    lout = cols.shape[2]
    w = wv[:, :, 0, :]
    out = np.einsum("nclk,ock->nol", cols, w, optimize=True) + bias.value[None, :, None]
    out = out[:, :, None, :]

    def vjp(g):
        g3 = g[:, :, 0, :]
        gw = np.einsum("nol,nclk->ock", g3, cols, optimize=True)[:, :, None, :]
        gb = g3.sum(axis=(0, 2))
        gx = np.zeros_like(xv[:, :, 0, :])
        for j in range(k):
            gx[:, :, j : j + stride * (lout - 1) + 1 : stride] += np.einsum("nol,oc->ncl", g3, w[:, :, j])
        return gx[:, :, None, :], gw, gb

    return _emit("conv_h1", [x, weight, bias], out, vjp)


def maxpool_h1(x, width: int = 2, stride: int = 2) -> Tensor:
    x = _as_tensor(x)
    xv = x.value
    if xv.ndim != 4 or xv.shape[2] != 1 or xv.shape[3] < width:
        raise ShapeError(f"maxpool_h1: input shape {xv.shape} incompatible with pool width {width}")
    win = sliding_window_view(xv[:, :, 0, :], width, axis=2)[:, :, ::stride, :]
    arg = win.argmax(axis=3)  # first maximum wins ties
    out = np.take_along_axis(win, arg[..., None], axis=3)[..., 0][:, :, None, :]
    lout = win.shape[2]
    src = arg + stride * np.arange(lout)[None, None, :]

    def vjp(g):
        gx = np.zeros_like(xv[:, :, 0, :])
        n, c = np.meshgrid(np.arange(xv.shape[0]), np.arange(xv.shape[1]), indexing="ij")
        np.add.at(gx, (n[..., None], c[..., None], src), g[:, :, 0, :])
        return (gx[:, :, None, :],)

    return _emit("maxpool_h1", [x], out, vjp)


def batchnorm(x, scale, shift, *, training: bool, running_mean=None, running_var=None,
              eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over axis 1.

    In training mode batch statistics (biased variance) are used and gradients
    flow through them; otherwise the supplied running statistics are frozen
    constants.
    """
    x, scale, shift = _as_tensor(x), _as_tensor(scale), _as_tensor(shift)
    xv = x.value
    C = xv.shape[1] if xv.ndim >= 2 else -1
    if scale.shape != (C,) or shift.shape != (C,):
        raise ShapeError(f"batchnorm: input shape {xv.shape} incompatible with scale shape {scale.shape}")
    axes = tuple(i for i in range(xv.ndim) if i != 1)
    bshape = [1] * xv.ndim
    bshape[1] = C
    if training:
        m = np.prod([xv.shape[a] for a in axes])
        mean = xv.mean(axis=axes, keepdims=True)
        var = xv.var(axis=axes, keepdims=True)
    else:
        if running_mean is None or running_var is None:
            raise ShapeError("batchnorm: inference mode needs running statistics")
        mean = np.asarray(running_mean).reshape(bshape)
        var = np.asarray(running_var).reshape(bshape)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mean) * inv
    sv = scale.value.reshape(bshape)
    out = xhat * sv + shift.value.reshape(bshape)

    def vjp(g):
        gscale = (g * xhat).sum(axis=axes)
        gshift = g.sum(axis=axes)
        gxhat = g * sv
        if training:
            gx = inv / m * (m * gxhat - gxhat.sum(axis=axes, keepdims=True)
                            - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            gx = gxhat * inv
        return gx, gscale, gshift

    return _emit("batchnorm", [x, scale, shift], out, vjp)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.value > 0
    return _emit("relu", [x], np.maximum(x.value, 0.0), lambda g: (g * mask,))


def linear(x, weight, bias) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (N, D) and weight (K, D)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.value.ndim != 2 or weight.value.ndim != 2 or x.shape[1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weight shape {weight.shape}"
                         f" and bias shape {bias.shape}")
    xv, wv = x.value, weight.value
    out = xv @ wv.T + bias.value

    def vjp(g):
        return g @ wv, g.T @ xv, g.sum(axis=0)

    return _emit("linear", [x, weight, bias], out, vjp)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.value + b.value
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
    return _emit("add", [a, b], out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.value - b.value
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None
    return _emit("sub", [a, b], out, lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.value, b.value
    try:
        out = av * bv
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    return _emit("mul", [a, b], out, lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def scale(x, factor) -> Tensor:
    """Multiply by a constant (scalar or broadcastable array; never differentiated)."""
    x = _as_tensor(x)
    f = np.asarray(factor, dtype=np.float64)
    try:
        out = x.value * f
    except ValueError:
        raise ShapeError(f"scale: shapes {x.shape} and {f.shape} do not broadcast") from None
    return _emit("scale", [x], out, lambda g: (_unbroadcast(g * f, x.shape),))


def mix(a, b, lam) -> Tensor:
    """``lam * a + (1 - lam) * b``; ``lam`` is a scalar or one weight per row."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mix: shapes {a.shape} and {b.shape} differ")
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 1:
        if lam.shape[0] != a.shape[0]:
            raise ShapeError(f"mix: {lam.shape[0]} weights for batch shape {a.shape}")
        lam = lam.reshape((-1,) + (1,) * (a.value.ndim - 1))
    out = lam * a.value + (1.0 - lam) * b.value
    return _emit("mix", [a, b], out, lambda g: (g * lam, g * (1.0 - lam)))


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        out = x.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None
    return _emit("reshape", [x], out, lambda g: (g.reshape(x.shape),))


def rows(x, index) -> Tensor:
    """Select rows ``x[index]`` along the leading axis."""
    x = _as_tensor(x)
    index = np.asarray(index)

    def vjp(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, index, g)
        return (gx,)

    return _emit("rows", [x], x.value[index], vjp)


def pick(x, cols) -> Tensor:
    """``x[i, cols[i]]`` for a 2-D ``x``; result has shape (N,)."""
    x = _as_tensor(x)
    cols = np.asarray(cols, dtype=np.int64)
    n = np.arange(x.shape[0])

    def vjp(g):
        gx = np.zeros_like(x.value)
        gx[n, cols] = g
        return (gx,)

    return _emit("pick", [x], x.value[n, cols], vjp)


def total(x, axis=None) -> Tensor:
    x = _as_tensor(x)
    out = np.asarray(x.value.sum(axis=axis))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _emit("sum", [x], out, vjp)


def mean(x) -> Tensor:
    x = _as_tensor(x)
    return scale(total(x), 1.0 / x.value.size)


def log_softmax(x) -> Tensor:
    x = _as_tensor(x)
    z = x.value - x.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _emit("log_softmax", [x], out, lambda g: (g - p * g.sum(axis=1, keepdims=True),))


def softmax(values: np.ndarray) -> np.ndarray:
    z = values - values.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
