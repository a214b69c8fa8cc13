"""
Elementwise, reduction and structural operators of the autodiff engine.

Every op computes its forward value with numpy and hands `make_node` a closure that maps
the upstream gradient to one adjoint per input (None where an input gets no gradient).
"""
from typing import Sequence

import numpy as np
from scipy.special import expit

from autodiff.tensor import Tensor, make_node
from utils.errors import ShapeError

INSTANCE_EPS = 1e-5


def _lift(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _first_mismatch(a: tuple[int, ...], b: tuple[int, ...]) -> str:
    if len(a) != len(b):
        return f"rank {len(a)} vs {len(b)}"
    for dim, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return f"dim {dim}: {x} vs {y}"
    return "none"


# ---- arithmetic -------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), backward, 'add')


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), backward, 'sub')


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_node(a.data * b.data, (a, b), backward, 'mul')


def div(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return make_node(a.data / b.data, (a, b), backward, 'div')


def power(x: Tensor, exponent: float) -> Tensor:
    def backward(g):
        return (g * exponent * np.power(x.data, exponent - 1),)

    return make_node(np.power(x.data, exponent), (x,), backward, 'pow')


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimension mismatch: dim 1 of left is {a.shape[1]}, "
                         f"dim 0 of right is {b.shape[0]}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return make_node(a.data @ b.data, (a, b), backward, 'matmul')


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# ---- activations ------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return make_node(np.where(mask, x.data, 0), (x,), backward, 'relu')


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def backward(g):
        return (g * out * (1 - out),)

    return make_node(out, (x,), backward, 'sigmoid')


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1 - out * out),)

    return make_node(out, (x,), backward, 'tanh')


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise ValueError(f"sqrt of negative value (min {x.data.min():.3g})")
    out = np.sqrt(x.data)

    def backward(g):
        return (g * 0.5 / out,)

    return make_node(out, (x,), backward, 'sqrt')


# ---- reductions -------------------------------------------------------------

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return make_node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward, 'sum')


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """ Mean over `axis` (all elements by default, giving a scalar). """
    reduced = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))
    count = x.data.size // max(reduced.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape),)

    return make_node(reduced, (x,), backward, 'mean')


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mse operands differ in shape ({_first_mismatch(a.shape, b.shape)})")
    diff = a.data - b.data
    count = diff.size

    def backward(g):
        grad = g * 2.0 * diff / count
        return grad, -grad

    return make_node(np.asarray((diff * diff).mean()), (a, b), backward, 'mse')


def max_of(scalars: Sequence[Tensor]) -> Tensor:
    """ Largest of a list of scalars; the gradient goes to the first maximal entry. """
    if len(scalars) == 0:
        raise ValueError("max_of needs a nonempty list")
    values = np.array([float(s.data.reshape(())) for s in scalars])
    winner = int(np.argmax(values))

    def backward(g):
        return tuple(g.reshape(s.shape) if i == winner else None for i, s in enumerate(scalars))

    return make_node(scalars[winner].data.reshape(()).copy(), tuple(scalars), backward, 'max_of')


def maximum(tensors: Sequence[Tensor]) -> Tensor:
    """ Elementwise largest of same-shaped tensors; each element's gradient goes to the first maximal input. """
    if len(tensors) == 0:
        raise ValueError("maximum needs a nonempty list")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError(f"maximum operands differ in shape ({_first_mismatch(tensors[0].shape, t.shape)})")
    stacked = np.stack([t.data for t in tensors])
    winner = np.argmax(stacked, axis=0)

    def backward(g):
        return tuple(np.where(winner == i, g, 0.0) for i in range(len(tensors)))

    return make_node(np.take_along_axis(stacked, winner[None], axis=0)[0], tuple(tensors), backward, 'maximum')


# ---- structure --------------------------------------------------------------

def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return make_node(x.data.reshape(shape), (x,), backward, 'reshape')


def index(x: Tensor, key) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return make_node(np.array(x.data[key]), (x,), backward, 'index')


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if len(tensors) == 0:
        raise ValueError("concat needs at least one tensor")
    reference = tensors[0].shape
    for t in tensors[1:]:
        for dim, (x, y) in enumerate(zip(reference, t.shape)):
            if dim != axis % len(reference) and x != y:
                raise ShapeError(f"concat along axis {axis}: dim {dim} differs ({x} vs {y})")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward, 'concat')


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    return concat(tensors, axis=1)


def fill_map(value: float, height: int, width: int) -> Tensor:
    """ Constant map of shape [1, H, W], used for the time-stamp channels. """
    return Tensor(np.full((1, height, width), value))


def instance_stats(features: Tensor, eps: float = INSTANCE_EPS) -> tuple[Tensor, Tensor]:
    """
    Per-sample, per-channel mean and standard deviation over the spatial dims.

    Returns:
        (mu, sigma), both of shape [N, C]; sigma = sqrt(population variance + eps).
    """
    if features.ndim != 4:
        raise ShapeError(f"instance_stats expects [N, C, H, W], got rank {features.ndim}")
    n, c, h, w = features.shape
    if h * w < 1:
        raise ShapeError("instance_stats needs at least one spatial element (dims 2, 3)")
    mu = mean(features, axis=(2, 3))
    centered = features - reshape(mu, (n, c, 1, 1))
    variance = mean(centered * centered, axis=(2, 3))
    return mu, sqrt(variance + eps)
