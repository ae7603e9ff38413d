"""A small reverse-mode autodiff engine over float64 NumPy arrays.

A :class:`Tensor` wraps an ``ndarray``; every differentiable operation is a
:class:`Function` subclass whose ``apply`` records the inputs on the output
tensor.  :meth:`Tensor.backward` walks the recorded graph once in reverse
topological order and accumulates gradients into the ``grad`` buffers of
leaves created with ``requires_grad=True``.
"""

import warnings

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_ctx", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, _ctx=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._ctx = _ctx
        self.name = name

    # -- basic properties --------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return Add.apply(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Sub.apply(self, _lift(other))

    def __rsub__(self, other):
        return Sub.apply(_lift(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return Scale.apply(self, factor=float(other))
        return Mul.apply(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return Scale.apply(self, factor=1.0 / float(other))
        return Div.apply(self, _lift(other))

    def __neg__(self):
        return Scale.apply(self, factor=-1.0)

    def __pow__(self, exponent):
        return Pow.apply(self, exponent=float(exponent))

    def sum(self, axis=None, keepdims=False):
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or None)

    def relu(self):
        return ReLU.apply(self)

    def sigmoid(self):
        return Sigmoid.apply(self)

    def backward(self, seed=None):
        backward(self, seed)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


class Function:
    """One node of the computation graph.

    Subclasses implement ``forward(*arrays, **kwargs) -> ndarray`` and
    ``backward(grad) -> tuple`` returning one gradient (or ``None``) per
    input.  Intermediate values needed by ``backward`` are stashed on
    ``self`` during ``forward``.
    """

    def __init__(self, *inputs):
        self.inputs = inputs

    @classmethod
    def apply(cls, *inputs, **kwargs):
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, _ctx=fn if requires_grad else None)

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# ----------------------------------------------------------------------------
# elementwise
# ----------------------------------------------------------------------------


class Add(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        self.shapes = a.shape, b.shape
        return a + b

    def backward(self, g):
        return _unbroadcast(g, self.shapes[0]), _unbroadcast(g, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        self.shapes = a.shape, b.shape
        return a - b

    def backward(self, g):
        return _unbroadcast(g, self.shapes[0]), _unbroadcast(-g, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, g):
        return _unbroadcast(g * self.b, self.a.shape), _unbroadcast(g * self.a, self.b.shape)


class Div(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        self.a, self.b = a, b
        return a / b

    def backward(self, g):
        ga = g / self.b
        gb = -g * self.a / (self.b * self.b)
        return _unbroadcast(ga, self.a.shape), _unbroadcast(gb, self.b.shape)


class Scale(Function):
    def forward(self, a, factor):
        self.factor = factor
        return a * factor

    def backward(self, g):
        return (g * self.factor,)


class Pow(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, g):
        return (g * self.exponent * self.a ** (self.exponent - 1.0),)


class Sqrt(Function):
    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, g):
        return (g / (2.0 * self.out),)


class ReLU(Function):
    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0.0)

    def backward(self, g):
        return (np.where(self.mask, g, 0.0),)


class Sigmoid(Function):
    def forward(self, a):
        # split by sign so exp never overflows
        e = np.exp(-np.abs(a))
        self.out = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self.out

    def backward(self, g):
        return (g * self.out * (1.0 - self.out),)


# ----------------------------------------------------------------------------
# reductions and shape ops
# ----------------------------------------------------------------------------


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, g):
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g, self.shape).copy(),)


class Mean(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        out = np.mean(a, axis=axis, keepdims=keepdims)
        self.count = a.size // max(np.size(out), 1) if a.size else 1
        return out

    def backward(self, g):
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g / self.count, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, g):
        return (g.reshape(self.shape),)


class Transpose(Function):
    def forward(self, a, axes=None):
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, g):
        if self.axes is None:
            return (np.transpose(g),)
        return (np.transpose(g, np.argsort(self.axes)),)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, g):
        return tuple(np.split(g, self.splits, axis=self.axis))


class Einsum(Function):
    """Generic einsum whose gradients are einsums over the remaining operands.

    Every index of an operand must appear either in the output or in some
    other operand, and no operand may repeat an index (no traces).
    """

    def forward(self, *arrays, subscripts):
        lhs, out = subscripts.replace(" ", "").split("->")
        self.in_subs = lhs.split(",")
        self.out_sub = out
        for k, sub in enumerate(self.in_subs):
            if len(set(sub)) != len(sub):
                raise ValueError(f"einsum operand {k} repeats an index: {sub!r}")
            others = set(out).union(*(set(s) for j, s in enumerate(self.in_subs) if j != k))
            if not set(sub) <= others:
                raise ValueError(f"einsum operand {k} has an index summed only over itself: {sub!r}")
        self.arrays = arrays
        return np.einsum(subscripts, *arrays, optimize=True)

    def backward(self, g):
        grads = []
        for k, tensor_in in enumerate(self.inputs):
            if not tensor_in.requires_grad:
                grads.append(None)
                continue
            subs = [self.out_sub] + [s for j, s in enumerate(self.in_subs) if j != k]
            ops = [g] + [a for j, a in enumerate(self.arrays) if j != k]
            expr = ",".join(subs) + "->" + self.in_subs[k]
            grads.append(np.einsum(expr, *ops, optimize=True))
        return tuple(grads)


def einsum(subscripts, *operands):
    return Einsum.apply(*(_lift(o) for o in operands), subscripts=subscripts)


def concat(tensors, axis=0):
    return Concat.apply(*tensors, axis=axis)


# ----------------------------------------------------------------------------
# convolution
# ----------------------------------------------------------------------------


class Conv2d(Function):
    def forward(self, x, w, stride=1, padding=0):
        self.x, self.w, self.stride, self.padding = x, w, stride, padding
        return kernels.conv2d_forward(x, w, stride, padding)

    def backward(self, g):
        gx = gw = None
        if self.inputs[0].requires_grad:
            gx = kernels.conv2d_grad_input(g, self.w, self.x.shape[-2:], self.stride, self.padding)
        if self.inputs[1].requires_grad:
            gw = kernels.conv2d_grad_weight(self.x, g, self.w.shape[-2:], self.stride, self.padding)
        return gx, gw


def conv2d(x, kernels_, stride=1, padding=0, bias=None):
    """Cross-correlate ``x`` (``(C, n, n)`` or ``(B, C, n, n)``) with ``(C_out, C_in, p, p)`` kernels."""
    x = _lift(x)
    kernels_ = _lift(kernels_)
    if kernels_.ndim != 4:
        raise ValueError(f"kernels must be 4-D (C_out, C_in, p, p), got shape {kernels_.shape}")
    p, q = kernels_.shape[-2:]
    if p != q or p % 2 == 0:
        raise ValueError(f"kernel spatial size must be odd and square, got {p}x{q}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    squeeze = x.ndim == 3
    if squeeze:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4:
        raise ValueError(f"input must be (C, n, n) or (B, C, n, n), got shape {x.shape}")
    if x.shape[1] != kernels_.shape[1]:
        raise ValueError(
            f"input channel dimension C_in={x.shape[1]} does not match kernel C_in={kernels_.shape[1]}"
        )
    if x.shape[2] + 2 * padding < p or x.shape[3] + 2 * padding < p:
        raise ValueError(f"spatial size {x.shape[2:]} too small for kernel {p} with padding {padding}")
    out = Conv2d.apply(x, kernels_, stride=stride, padding=padding)
    if bias is not None:
        out = out + _lift(bias).reshape(1, -1, 1, 1)
    if squeeze:
        out = out.reshape(out.shape[1:])
    return out


# ----------------------------------------------------------------------------
# functional helpers
# ----------------------------------------------------------------------------


def add(a, b):
    return _lift(a) + b


def multiply(a, b):
    return _lift(a) * b


def scale(a, factor):
    return Scale.apply(_lift(a), factor=float(factor))


def relu(a):
    return ReLU.apply(_lift(a))


def sigmoid(a):
    return Sigmoid.apply(_lift(a))


def sqrt(a):
    return Sqrt.apply(_lift(a))


def mse_loss(a, b):
    d = _lift(a) - b
    return (d * d).mean()


def l2_norm(a, axis=None):
    """Euclidean norm; ``axis`` may be a tuple of axes to reduce."""
    a = _lift(a)
    return Sqrt.apply((a * a).sum(axis=axis))


# ----------------------------------------------------------------------------
# graph traversal
# ----------------------------------------------------------------------------


def graph_nodes(output):
    """Tensors reachable from ``output`` in topological order (inputs first)."""
    order = []
    seen = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.inputs:
                if id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(output, seed=None):
    """Accumulate d(seed . output)/d(leaf) into every ``requires_grad`` leaf."""
    if output._ctx is None:
        warnings.warn("backward() called on a tensor with no recorded operations; nothing to do",
                      RuntimeWarning, stacklevel=2)
        return
    if seed is None:
        if output.size != 1:
            raise ValueError(f"seed required for non-scalar output of shape {output.shape}")
        seed = np.ones(output.shape)
    seed = np.asarray(seed.data if isinstance(seed, Tensor) else seed, dtype=np.float64)
    if seed.shape != output.shape:
        raise ValueError(f"seed shape {seed.shape} does not match output shape {output.shape}")

    grads = {id(output): seed}
    for node in reversed(graph_nodes(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._ctx is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._ctx.inputs, node._ctx.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                pg = pg.reshape(parent.shape)
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

