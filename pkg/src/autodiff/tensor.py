import contextlib
import logging
import os
import threading
from typing import Callable, Iterator, Sequence

import numpy as np

from utils.errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

_PRECISIONS = {'float32': np.float32, 'float64': np.float64}

_state = threading.local()


def _thread_state():
    if not hasattr(_state, 'dtype'):
        _state.dtype = _PRECISIONS[os.getenv('MORPH_PRECISION', 'float32')]
        _state.grad_enabled = True
        _state.tape = Tape()
    return _state


def get_dtype() -> type:
    return _thread_state().dtype


def set_precision(name: str):
    """
    Switch the floating point precision used for newly created tensors on this thread.

    Args:
        name: 'float32' (training default) or 'float64' (gradient checks).
    """
    if name not in _PRECISIONS:
        raise ValueError(f"Unknown precision: {name}. Use one of {sorted(_PRECISIONS)}")
    _thread_state().dtype = _PRECISIONS[name]


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    previous = get_dtype()
    set_precision(name)
    try:
        yield
    finally:
        _thread_state().dtype = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """ Disable tape recording inside the block (inference, detached evaluation). """
    state = _thread_state()
    previous = state.grad_enabled
    state.grad_enabled = False
    try:
        yield
    finally:
        state.grad_enabled = previous


def grad_enabled() -> bool:
    return _thread_state().grad_enabled


class Tensor:
    """
    Dense N-dimensional array that may take part in the gradient tape.

    Leaves created by the user hold `requires_grad`; results of differentiable ops are
    recorded on the thread's tape with the closure computing their input adjoints.
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.ascontiguousarray(data, dtype=dtype or get_dtype())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple['Tensor', ...] = ()
        self._backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = ''

    # ---- inspection ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> 'Tensor':
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ', requires_grad=True' if self.requires_grad else ''
        op = f', op={self._op}' if self._op else ''
        return f"Tensor(shape={self.shape}{flag}{op})"

    def __len__(self):
        return self.shape[0]

    def backward(self, grad: np.ndarray | None = None):
        backward(self, grad)

    # ---- operators (implemented in autodiff.ops) ---------------------------
    def __add__(self, other):
        from autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from autodiff import ops
        return ops.mul(self, -1.0)

    def __pow__(self, exponent: float):
        from autodiff import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from autodiff import ops
        return ops.index(self, index)

    def reshape(self, *shape):
        from autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False):
        from autodiff import ops
        return ops.sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Tape:
    """
    Ordered record of the differentiable operations executed on one thread.

    `backward` replays adjoints in reverse execution order, visiting every node reachable
    from the loss exactly once, and then drops the consumed nodes from the record.
    """

    def __init__(self):
        self._nodes: list[Tensor] = []

    def __len__(self):
        return len(self._nodes)

    def record(self, node: Tensor):
        self._nodes.append(node)

    def reset(self):
        self._nodes.clear()

    def discard(self, consumed: set[int]):
        self._nodes = [node for node in self._nodes if id(node) not in consumed]

    def reversed_nodes(self) -> Iterator[Tensor]:
        return reversed(self._nodes)


def current_tape() -> Tape:
    return _thread_state().tape


def make_node(data: np.ndarray, parents: Sequence[Tensor],
              backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]], op: str) -> Tensor:
    """
    Wrap the forward result of an op, recording it on the tape when any input needs a gradient.
    """
    out = Tensor(data, dtype=data.dtype if np.issubdtype(data.dtype, np.floating) else None)
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError(op)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        out._op = op
        current_tape().record(out)
    return out


def _reachable(loss: Tensor) -> set[int]:
    seen: set[int] = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen or node.is_leaf:
            continue
        seen.add(id(node))
        stack.extend(p for p in node._parents if p.requires_grad)
    return seen


def backward(loss: Tensor, grad: np.ndarray | None = None):
    """
    Populate `.grad` of every requires_grad leaf reachable from `loss`.

    Args:
        loss: Tensor to differentiate, a scalar unless `grad` is given.
        grad: Upstream gradient with the shape of `loss`; defaults to one.
    """
    if grad is None:
        if loss.data.size != 1:
            raise ShapeError(f"backward() without upstream gradient needs a scalar, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    else:
        grad = np.asarray(grad, dtype=loss.data.dtype)
        if grad.shape != loss.shape:
            raise ShapeError(f"upstream gradient shape {grad.shape} does not match tensor shape {loss.shape}")

    if loss.is_leaf:
        if loss.requires_grad:
            _accumulate_leaf(loss, grad)
        return

    tape = current_tape()
    reachable = _reachable(loss)
    pending: dict[int, np.ndarray] = {id(loss): grad}
    visited = 0
    for node in tape.reversed_nodes():
        key = id(node)
        if key not in reachable:
            continue
        visited += 1
        node_grad = pending.pop(key, None)
        if node_grad is None:
            continue
        parent_grads = node._backward_fn(node_grad)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                _accumulate_leaf(parent, parent_grad)
            elif id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + parent_grad
            else:
                pending[id(parent)] = parent_grad
    if visited != len(reachable):
        logger.warning(f'{len(reachable) - visited} graph nodes were not found on this thread\'s tape')
    tape.discard(reachable)


def _accumulate_leaf(leaf: Tensor, grad: np.ndarray):
    grad = np.asarray(grad, dtype=leaf.data.dtype).reshape(leaf.shape)
    leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad
