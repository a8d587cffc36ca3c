"""Dense float tensors with reverse-mode automatic differentiation.

Just enough machinery for the two encoder towers and the batch loss:
2-D matmul, vector dot, element-wise nonlinearities, row softmax, row
gather/stack. Operations executed while a tape is active append a record
(op name, input node ids, output node id, backward closure); backward()
replays the tape once in reverse. The tape is dynamic and is expected to
be cleared at every training step.

Values are float32 by default. Gradient checks run under
``using_dtype(np.float64)`` so finite differences are not drowned by
single-precision noise.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np

from .errors import DimensionError, TapeError

_DTYPE = np.float32
_GRAD_ENABLED = True
_node_counter = itertools.count()


def default_dtype():
    return _DTYPE


@contextlib.contextmanager
def using_dtype(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    global _DTYPE
    prev = _DTYPE
    _DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.node_id = next(_node_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.item())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, delta):
        if self.grad is None:
            self.grad = np.array(delta, dtype=self.data.dtype)
        else:
            self.grad += delta

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Ordered record of executed primitives; inputs always precede use."""

    def __init__(self):
        self.records = []
        self.consumed = False

    def __len__(self):
        return len(self.records)


_ACTIVE_TAPE: Tape | None = None


def new_tape() -> Tape:
    """Install and return a fresh tape (clears the previous one)."""
    global _ACTIVE_TAPE
    _ACTIVE_TAPE = Tape()
    return _ACTIVE_TAPE


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE


def _record(op, inputs, out, backward_fn):
    if not _GRAD_ENABLED or _ACTIVE_TAPE is None:
        return
    if not any(t.requires_grad for t in inputs):
        return
    out.requires_grad = True
    _ACTIVE_TAPE.records.append(
        (op, tuple(t.node_id for t in inputs), out.node_id, backward_fn)
    )


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss.

    The active tape is traversed exactly once in reverse; running backward a
    second time without new_tape() raises, since silent re-accumulation is
    always a bug.
    """
    if loss.data.shape != ():
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    tape = _ACTIVE_TAPE
    if tape is None:
        return
    if tape.consumed:
        raise TapeError("backward already ran on this tape; call new_tape() first")
    tape.consumed = True
    loss._accumulate(np.asarray(1.0, dtype=loss.data.dtype))
    for _op, _in_ids, _out_id, backward_fn in reversed(tape.records):
        backward_fn()


# ---------------------------------------------------------------------------
# primitives


def _wrap(data, inputs, op, backward_fn_factory):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    out.node_id = next(_node_counter)
    _record(op, inputs, out, backward_fn_factory(out))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not agree")
    data = a.data @ b.data

    def make(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)
        return bw

    return _wrap(data, (a, b), "matmul", make)


def dot(u: Tensor, v: Tensor) -> Tensor:
    if u.ndim != 1 or v.ndim != 1 or u.shape[0] != v.shape[0]:
        raise DimensionError(f"dot needs equal-length vectors, got {u.shape} and {v.shape}")
    data = np.asarray(u.data @ v.data, dtype=u.data.dtype)

    def make(out):
        def bw():
            g = out.grad
            if u.requires_grad:
                u._accumulate(g * v.data)
            if v.requires_grad:
                v._accumulate(g * u.data)
        return bw

    return _wrap(data, (u, v), "dot", make)


def add(a: Tensor, b: Tensor) -> Tensor:
    # same shape, or matrix + row-vector bias (the only broadcast we allow)
    if a.shape != b.shape and not (
        a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]
    ):
        raise DimensionError(f"add shapes {a.shape} and {b.shape} do not agree")
    data = a.data + b.data

    def make(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g.sum(axis=0) if b.ndim < g.ndim else g)
        return bw

    return _wrap(data, (a, b), "add", make)


def neg(a: Tensor) -> Tensor:
    def make(out):
        def bw():
            if a.requires_grad:
                a._accumulate(-out.grad)
        return bw

    return _wrap(-a.data, (a,), "neg", make)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul shapes {a.shape} and {b.shape} differ")
    data = a.data * b.data

    def make(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                a._accumulate(g * b.data)
            if b.requires_grad:
                b._accumulate(g * a.data)
        return bw

    return _wrap(data, (a, b), "mul", make)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def make(out):
        def bw():
            if a.requires_grad:
                a._accumulate(out.grad * s)
        return bw

    return _wrap(a.data * np.asarray(s, dtype=a.data.dtype), (a,), "scale", make)


def _sigmoid_values(x):
    # branch on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    data = _sigmoid_values(np.atleast_1d(np.asarray(x.data)))
    data = data.reshape(x.data.shape)

    def make(out):
        def bw():
            if x.requires_grad:
                x._accumulate(out.grad * data * (1.0 - data))
        return bw

    return _wrap(data, (x,), "sigmoid", make)


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)

    def make(out):
        def bw():
            if x.requires_grad:
                x._accumulate(out.grad * (1.0 - data * data))
        return bw

    return _wrap(data, (x,), "tanh", make)


def softplus(x: Tensor) -> Tensor:
    # log(1 + e^x) without overflow; gradient is sigmoid(x)
    data = np.maximum(x.data, 0) + np.log1p(np.exp(-np.abs(x.data)))

    def make(out):
        def bw():
            if x.requires_grad:
                x._accumulate(
                    out.grad * _sigmoid_values(np.atleast_1d(x.data)).reshape(x.data.shape)
                )
        return bw

    return _wrap(data, (x,), "softplus", make)


def softmax_rows(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows needs a matrix, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def make(out):
        def bw():
            if x.requires_grad:
                g = out.grad
                inner = (g * data).sum(axis=1, keepdims=True)
                x._accumulate(data * (g - inner))
        return bw

    return _wrap(data, (x,), "softmax_rows", make)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.shape}")

    def make(out):
        def bw():
            if x.requires_grad:
                x._accumulate(out.grad.T)
        return bw

    return _wrap(np.ascontiguousarray(x.data.T), (x,), "transpose", make)


def sum_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def make(out):
        def bw():
            if x.requires_grad:
                x._accumulate(np.full(x.data.shape, out.grad, dtype=x.data.dtype))
        return bw

    return _wrap(data, (x,), "sum_all", make)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Select rows of a matrix by integer index (embedding lookup)."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"gather_rows needs a matrix, got shape {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError("gather_rows index out of range")
    data = table.data[ids]

    def make(out):
        def bw():
            if table.requires_grad:
                if table.grad is None:
                    table.grad = np.zeros_like(table.data)
                np.add.at(table.grad, ids, out.grad)
        return bw

    return _wrap(data, (table,), "gather_rows", make)


def take_row(x: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a vector (mask-position pooling)."""
    if x.ndim != 2:
        raise DimensionError(f"take_row needs a matrix, got shape {x.shape}")
    if not 0 <= i < x.shape[0]:
        raise DimensionError(f"row {i} out of range for shape {x.shape}")
    data = x.data[i].copy()

    def make(out):
        def bw():
            if x.requires_grad:
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[i] += out.grad
        return bw

    return _wrap(data, (x,), "take_row", make)


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean of a matrix as a vector (mean pooling)."""
    if x.ndim != 2:
        raise DimensionError(f"mean_rows needs a matrix, got shape {x.shape}")
    data = x.data.mean(axis=0)

    def make(out):
        def bw():
            if x.requires_grad:
                x._accumulate(
                    np.broadcast_to(out.grad / x.shape[0], x.data.shape).astype(x.data.dtype)
                )
        return bw

    return _wrap(data, (x,), "mean_rows", make)


def vecmat(v: Tensor, m: Tensor) -> Tensor:
    """Vector-matrix product v @ m -> vector (output head application)."""
    if v.ndim != 1 or m.ndim != 2 or v.shape[0] != m.shape[0]:
        raise DimensionError(f"vecmat shapes {v.shape} and {m.shape} do not agree")
    data = v.data @ m.data

    def make(out):
        def bw():
            g = out.grad
            if v.requires_grad:
                v._accumulate(m.data @ g)
            if m.requires_grad:
                m._accumulate(np.outer(v.data, g))
        return bw

    return _wrap(data, (v, m), "vecmat", make)


def stack_rows(vectors) -> Tensor:
    vectors = list(vectors)
    if not vectors:
        raise DimensionError("stack_rows needs at least one vector")
    width = vectors[0].shape[0]
    for v in vectors:
        if v.ndim != 1 or v.shape[0] != width:
            raise DimensionError("stack_rows needs equal-length vectors")
    data = np.stack([v.data for v in vectors])

    def make(out):
        def bw():
            for i, v in enumerate(vectors):
                if v.requires_grad:
                    v._accumulate(out.grad[i])
        return bw

    return _wrap(data, tuple(vectors), "stack_rows", make)


def assert_finite(x: Tensor, context: str = "tensor") -> None:
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError(f"non-finite values in {context}")
