"""Primitive op registry: forward rules, numeric VJPs, and derivative graphs.

Every op registers a numeric `vjp` (used by Tape.backward). Ops that can sit
on a gradient-of-gradient path additionally register `grad_graph`, which
emits the VJP as new tape nodes; ops without it (hard clamp, gathers)
trigger SecondOrderError from Tape.input_gradient.
"""

import numpy as np

from ..backend import kernels
from .tape import Node, OP_REGISTRY, ArityError


class OpDef:
    __slots__ = ("name", "forward", "vjp", "grad_graph")

    def __init__(self, name, forward, vjp, grad_graph=None):
        self.name = name
        self.forward = forward
        self.vjp = vjp
        self.grad_graph = grad_graph


def _register(name, forward, vjp, grad_graph=None):
    OP_REGISTRY[name] = OpDef(name, forward, vjp, grad_graph)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _unbroadcast_node(g: Node, shape: tuple) -> Node:
    if g.shape == shape:
        return g
    extra = len(g.shape) - len(shape)
    if extra > 0:
        g = sum_(g, axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = sum_(g, axis=axes, keepdims=True)
    return reshape(g, shape)


def ones_like_node(a: Node) -> Node:
    return a.tape.constant(np.ones_like(a.value))


def zeros_like_node(a: Node) -> Node:
    return a.tape.constant(np.zeros_like(a.value))


# ---- arithmetic -------------------------------------------------------------

_register(
    "add",
    lambda node, a, b: a + b,
    lambda node, g: [_unbroadcast(g, node.inputs[0].value.shape),
                     _unbroadcast(g, node.inputs[1].value.shape)],
    lambda node, g, needs: [_unbroadcast_node(g, node.inputs[0].shape) if needs[0] else None,
                            _unbroadcast_node(g, node.inputs[1].shape) if needs[1] else None],
)

_register(
    "sub",
    lambda node, a, b: a - b,
    lambda node, g: [_unbroadcast(g, node.inputs[0].value.shape),
                     _unbroadcast(-g, node.inputs[1].value.shape)],
    lambda node, g, needs: [_unbroadcast_node(g, node.inputs[0].shape) if needs[0] else None,
                            _unbroadcast_node(neg(g), node.inputs[1].shape) if needs[1] else None],
)

_register(
    "mul",
    lambda node, a, b: a * b,
    lambda node, g: [_unbroadcast(g * node.inputs[1].value, node.inputs[0].value.shape),
                     _unbroadcast(g * node.inputs[0].value, node.inputs[1].value.shape)],
    lambda node, g, needs: [
        _unbroadcast_node(mul(g, node.inputs[1]), node.inputs[0].shape) if needs[0] else None,
        _unbroadcast_node(mul(g, node.inputs[0]), node.inputs[1].shape) if needs[1] else None,
    ],
)

_register(
    "div",
    lambda node, a, b: a / b,
    lambda node, g: [
        _unbroadcast(g / node.inputs[1].value, node.inputs[0].value.shape),
        _unbroadcast(-g * node.inputs[0].value / np.square(node.inputs[1].value),
                     node.inputs[1].value.shape),
    ],
    lambda node, g, needs: [
        _unbroadcast_node(div(g, node.inputs[1]), node.inputs[0].shape) if needs[0] else None,
        _unbroadcast_node(
            neg(div(mul(g, node.inputs[0]), mul(node.inputs[1], node.inputs[1]))),
            node.inputs[1].shape) if needs[1] else None,
    ],
)

_register(
    "neg",
    lambda node, a: -a,
    lambda node, g: [-g],
    lambda node, g, needs: [neg(g)],
)

_register(
    "matmul",
    lambda node, a, b: a @ b,
    lambda node, g: [g @ node.inputs[1].value.T, node.inputs[0].value.T @ g],
    lambda node, g, needs: [
        matmul(g, transpose(node.inputs[1])) if needs[0] else None,
        matmul(transpose(node.inputs[0]), g) if needs[1] else None,
    ],
)

_register(
    "transpose",
    lambda node, a: a.T,
    lambda node, g: [g.T],
    lambda node, g, needs: [transpose(g)],
)


# ---- shape ops ---------------------------------------------------------------

_register(
    "reshape",
    lambda node, a: a.reshape(node.aux),
    lambda node, g: [g.reshape(node.inputs[0].value.shape)],
    lambda node, g, needs: [reshape(g, node.inputs[0].shape)],
)


def _concat_fwd(node, *vals):
    return np.concatenate(vals, axis=node.aux)


def _concat_vjp(node, g):
    axis = node.aux
    sizes = [inp.value.shape[axis] for inp in node.inputs]
    return list(np.split(g, np.cumsum(sizes)[:-1], axis=axis))


def _concat_gg(node, g, needs):
    axis = node.aux
    out, start = [], 0
    for inp, need in zip(node.inputs, needs):
        size = inp.shape[axis]
        out.append(narrow(g, axis, start, size) if need else None)
        start += size
    return out


_register("concat", _concat_fwd, _concat_vjp, _concat_gg)


def _narrow_fwd(node, a):
    axis, start, size = node.aux
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + size)
    return np.ascontiguousarray(a[tuple(sl)])


def _narrow_vjp(node, g):
    axis, start, size = node.aux
    out = np.zeros_like(node.inputs[0].value)
    sl = [slice(None)] * out.ndim
    sl[axis] = slice(start, start + size)
    out[tuple(sl)] = g
    return [out]


def _narrow_gg(node, g, needs):
    axis, start, _ = node.aux
    total = node.inputs[0].shape[axis]
    return [pad_slice(g, axis, start, total)]


_register("narrow", _narrow_fwd, _narrow_vjp, _narrow_gg)


def _pad_slice_fwd(node, a):
    axis, start, total = node.aux
    shape = list(a.shape)
    shape[axis] = total
    out = np.zeros(shape, dtype=a.dtype)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + a.shape[axis])
    out[tuple(sl)] = a
    return out


def _pad_slice_vjp(node, g):
    axis, start, _ = node.aux
    size = node.inputs[0].value.shape[axis]
    sl = [slice(None)] * g.ndim
    sl[axis] = slice(start, start + size)
    return [np.ascontiguousarray(g[tuple(sl)])]


def _pad_slice_gg(node, g, needs):
    axis, start, _ = node.aux
    size = node.inputs[0].shape[axis]
    return [narrow(g, axis, start, size)]


_register("pad_slice", _pad_slice_fwd, _pad_slice_vjp, _pad_slice_gg)


def _sum_fwd(node, a):
    axis, keepdims = node.aux
    return np.sum(a, axis=axis, keepdims=keepdims)


def _sum_expand(g, in_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, in_shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(in_shape) for a in axes)
        shape = [1 if i in axes else s for i, s in enumerate(in_shape)]
        g = g.reshape(shape)
    return np.broadcast_to(g, in_shape)


def _sum_vjp(node, g):
    axis, keepdims = node.aux
    return [_sum_expand(g, node.inputs[0].value.shape, axis, keepdims)]


def _sum_gg(node, g, needs):
    axis, keepdims = node.aux
    in_shape = node.inputs[0].shape
    if axis is not None and not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(in_shape) for a in axes)
        shape = tuple(1 if i in axes else s for i, s in enumerate(in_shape))
        g = reshape(g, shape)
    return [mul(g, ones_like_node(node.inputs[0]))]


_register("sum", _sum_fwd, _sum_vjp, _sum_gg)


def _cumsum_exclusive_fwd(node, a):
    axis = node.aux
    out = np.cumsum(a, axis=axis)
    out = np.swapaxes(out, axis, -1)
    out[..., 1:] = out[..., :-1]
    out[..., 0] = 0
    return np.swapaxes(out, axis, -1)


def _cumsum_exclusive_vjp(node, g):
    axis = node.aux
    sw = np.swapaxes(g, axis, -1)
    tail = np.cumsum(sw[..., ::-1], axis=-1)[..., ::-1]  # sum_{i >= j} g_i
    out = tail - sw  # sum_{i > j} g_i
    return [np.ascontiguousarray(np.swapaxes(out, axis, -1))]


_register("cumsum_exclusive", _cumsum_exclusive_fwd, _cumsum_exclusive_vjp)


def _repeat_rows_fwd(node, a):
    return np.repeat(a, node.aux, axis=0)


def _repeat_rows_vjp(node, g):
    k = node.aux
    r = node.inputs[0].value.shape[0]
    return [g.reshape(r, k, *g.shape[1:]).sum(axis=1)]


_register("repeat_rows", _repeat_rows_fwd, _repeat_rows_vjp)


def _gather_rows_fwd(node, a):
    return np.ascontiguousarray(a[node.aux])


def _gather_rows_vjp(node, g):
    out = np.zeros_like(node.inputs[0].value)
    np.add.at(out, node.aux, g)
    return [out]


_register("gather_rows", _gather_rows_fwd, _gather_rows_vjp)


# ---- elementwise nonlinearities ----------------------------------------------

_register(
    "exp",
    lambda node, a: np.exp(a),
    lambda node, g: [g * node.value],
    lambda node, g, needs: [mul(g, node)],
)

_register(
    "log",
    lambda node, a: np.log(a),
    lambda node, g: [g / node.inputs[0].value],
    lambda node, g, needs: [div(g, node.inputs[0])],
)

_register(
    "sqrt",
    lambda node, a: np.sqrt(a),
    lambda node, g: [g * 0.5 / node.value],
    lambda node, g, needs: [div(mul(g, node.tape.constant(0.5)), node)],
)

_register(
    "square",
    lambda node, a: np.square(a),
    lambda node, g: [g * 2.0 * node.inputs[0].value],
    lambda node, g, needs: [mul(mul(g, node.tape.constant(2.0)), node.inputs[0])],
)

_register(
    "sin",
    lambda node, a: np.sin(a),
    lambda node, g: [g * np.cos(node.inputs[0].value)],
    lambda node, g, needs: [mul(g, cos(node.inputs[0]))],
)

_register(
    "cos",
    lambda node, a: np.cos(a),
    lambda node, g: [-g * np.sin(node.inputs[0].value)],
    lambda node, g, needs: [neg(mul(g, sin(node.inputs[0])))],
)

_register(
    "softplus",
    lambda node, a: kernels.softplus(a),
    lambda node, g: [g * kernels.sigmoid(node.inputs[0].value)],
    lambda node, g, needs: [mul(g, sigmoid(node.inputs[0]))],
)


def _sigmoid_gg(node, g, needs):
    one = ones_like_node(node)
    return [mul(g, mul(node, sub(one, node)))]


_register(
    "sigmoid",
    lambda node, a: kernels.sigmoid(a),
    lambda node, g: [g * node.value * (1.0 - node.value)],
    _sigmoid_gg,
)

_register(
    "clamp_min",
    lambda node, a: np.maximum(a, node.aux),
    lambda node, g: [g * (node.inputs[0].value >= node.aux)],
    None,  # second derivative unsupported (hard clamp)
)


# ---- positional encoding primitives ------------------------------------------

def _posenc_sincos(node, x):
    freqs, _ = node.aux
    args = x[:, None, :] * freqs.astype(x.dtype)[None, :, None]  # (M, K, D)
    return kernels.sincos(args)


def _posenc_fwd(node, x):
    freqs, betas = node.aux
    m, d = x.shape
    s, c = _posenc_sincos(node, x)
    node.cache = (s, c)
    b = betas.astype(x.dtype)[None, :, None]
    out = np.empty((m, d + 2 * d * freqs.shape[0]), dtype=x.dtype)
    out[:, :d] = x
    out[:, d:] = np.concatenate([s * b, c * b], axis=2).reshape(m, -1)
    return out


def _posenc_vjp(node, g):
    freqs, betas = node.aux
    x = node.inputs[0].value
    m, d = x.shape
    k = freqs.shape[0]
    s, c = node.cache if node.cache is not None else _posenc_sincos(node, x)
    a = g[:, d:].reshape(m, k, 2 * d)
    fb = (freqs * betas).astype(x.dtype)[None, :, None]
    gx = g[:, :d] + np.sum(fb * (a[:, :, :d] * c - a[:, :, d:] * s), axis=1)
    return [gx.astype(x.dtype, copy=False)]


def _posenc_gg(node, g, needs):
    return [posenc_vjp_node(node.inputs[0], g, *node.aux)]


_register("posenc", _posenc_fwd, _posenc_vjp, _posenc_gg)


def _posenc_vjp_fwd(node, x, adj):
    freqs, betas = node.aux
    m, d = x.shape
    k = freqs.shape[0]
    s, c = _posenc_sincos(node, x)
    node.cache = (s, c)
    a = adj[:, d:].reshape(m, k, 2 * d)
    fb = (freqs * betas).astype(x.dtype)[None, :, None]
    gx = adj[:, :d] + np.sum(fb * (a[:, :, :d] * c - a[:, :, d:] * s), axis=1)
    return gx.astype(x.dtype, copy=False)


def _posenc_vjp_vjp(node, u):
    freqs, betas = node.aux
    x = node.inputs[0].value
    adj = node.inputs[1].value
    m, d = x.shape
    k = freqs.shape[0]
    s, c = node.cache if node.cache is not None else _posenc_sincos(node, x)
    a = adj[:, d:].reshape(m, k, 2 * d)
    fb = (freqs * betas).astype(x.dtype)[None, :, None]
    ffb = (freqs * freqs * betas).astype(x.dtype)[None, :, None]
    gx = u * np.sum(ffb * (-a[:, :, :d] * s - a[:, :, d:] * c), axis=1)
    gadj = np.empty_like(adj)
    gadj[:, :d] = u
    ga = np.concatenate([fb * c * u[:, None, :], -fb * s * u[:, None, :]], axis=2)
    gadj[:, d:] = ga.reshape(m, -1)
    return [gx.astype(x.dtype, copy=False), gadj]


_register("posenc_vjp", _posenc_vjp_fwd, _posenc_vjp_vjp)


# ---- user-facing constructors --------------------------------------------------

def _node(op, inputs, aux=None):
    tape = inputs[0].tape
    for inp in inputs[1:]:
        if inp.tape is not tape:
            raise ValueError("nodes belong to different tapes")
    opdef = OP_REGISTRY[op]
    n = Node(tape, op, tuple(inputs), None, aux=aux)
    if not any(i.value is None for i in inputs):
        n.value = opdef.forward(n, *[i.value for i in inputs])
    return n


def add(a, b):
    return _node("add", [a, b])


def sub(a, b):
    return _node("sub", [a, b])


def mul(a, b):
    return _node("mul", [a, b])


def div(a, b):
    return _node("div", [a, b])


def neg(a):
    return _node("neg", [a])


def matmul(a, b):
    if a.value is not None and b.value is not None:
        if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
            raise ArityError(
                f"matmul shapes {a.value.shape} x {b.value.shape} are incompatible")
    return _node("matmul", [a, b])


def transpose(a):
    return _node("transpose", [a])


def reshape(a, shape):
    return _node("reshape", [a], aux=tuple(shape))


def concat(nodes, axis):
    return _node("concat", list(nodes), aux=axis)


def narrow(a, axis, start, size):
    return _node("narrow", [a], aux=(axis, start, size))


def pad_slice(a, axis, start, total):
    return _node("pad_slice", [a], aux=(axis, start, total))


def sum_(a, axis=None, keepdims=False):
    return _node("sum", [a], aux=(axis, keepdims))


def mean(a, axis=None):
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(sum_(a, axis=axis), a.tape.constant(1.0 / n))


def cumsum_exclusive(a, axis):
    return _node("cumsum_exclusive", [a], aux=axis)


def repeat_rows(a, k):
    return _node("repeat_rows", [a], aux=int(k))


def gather_rows(a, idx):
    idx = np.asarray(idx, dtype=np.int64)
    return _node("gather_rows", [a], aux=idx)


def exp(a):
    return _node("exp", [a])


def log(a):
    return _node("log", [a])


def sqrt(a):
    return _node("sqrt", [a])


def square(a):
    return _node("square", [a])


def sin(a):
    return _node("sin", [a])


def cos(a):
    return _node("cos", [a])


def softplus(a):
    return _node("softplus", [a])


def sigmoid(a):
    return _node("sigmoid", [a])


def clamp_min(a, lo=0.0):
    return _node("clamp_min", [a], aux=float(lo))


def posenc(x, freqs, betas):
    freqs = np.asarray(freqs, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    if freqs.shape != betas.shape:
        raise ArityError("freqs and betas must have matching length")
    return _node("posenc", [x], aux=(freqs, betas))


def posenc_vjp_node(x, adj, freqs, betas):
    return _node("posenc_vjp", [x, adj], aux=(freqs, betas))
