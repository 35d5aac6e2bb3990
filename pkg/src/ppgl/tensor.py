"""Dense float64 tensors with a define-by-run reverse-mode gradient tape.

Operations are recorded on the innermost active :class:`Tape` whenever one
of their inputs requires a gradient.  Outside a tape context nothing is
recorded, which is how rollout collection and evaluation run.

    >>> W = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    >>> x = Tensor([[1.0, 1.0]])
    >>> with Tape() as tape:
    ...     loss = (x @ W).tanh().sum()
    >>> tape.backward(loss)
    >>> W.grad.shape
    (2, 2)

Broadcasting is deliberately absent apart from scalar-by-tensor arithmetic;
bias rows are tiled explicitly with :meth:`Tensor.expand_rows`.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "DomainError",
    "TapeError",
    "backward",
    "concat",
    "stack",
    "minimum",
    "lstm_cell",
    "zero_grad",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class TapeError(RuntimeError):
    """Misuse of the gradient tape (non-scalar loss, loss not recorded...)."""


_state = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations; nodes are appended in execution order."""

    __slots__ = ("nodes", "_outputs", "__weakref__")

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._outputs: set[int] = set()

    def __enter__(self) -> "Tape":
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], grad_fn: Callable) -> None:
        self.nodes.append((out, inputs, grad_fn))
        self._outputs.add(id(out))

    def backward(self, loss: "Tensor") -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._outputs:
            raise TapeError("loss was not produced by an operation on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for out, inputs, grad_fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = grad_fn(g)
            for inp, ig in zip(inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
                if key not in self._outputs:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            if leaf.grad is None:
                leaf.grad = np.array(g, dtype=np.float64).reshape(leaf.data.shape)
            else:
                leaf.grad += g


def backward(loss: "Tensor", tape: Tape) -> None:
    tape.backward(loss)


def zero_grad(tensors: Iterable["Tensor"]) -> None:
    for t in tensors:
        t.grad = None


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """Row-major float64 array that may take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(shape), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- recording ---------------------------------------------------------

    @staticmethod
    def _result(value: np.ndarray, inputs: tuple["Tensor", ...], grad_fn: Callable) -> "Tensor":
        out = Tensor._wrap(value)
        tape = _active_tape()
        if tape is not None:
            for inp in inputs:
                if inp.requires_grad:
                    out.requires_grad = True
                    tape.record(out, inputs, grad_fn)
                    break
        return out

    # -- binary arithmetic -------------------------------------------------

    def _binary_operand(self, other, op: str) -> "Tensor":
        if not isinstance(other, Tensor):
            other = Tensor._wrap(_as_array(other))
        if other.data.shape != self.data.shape and other.data.size != 1 and self.data.size != 1:
            raise ShapeError(f"{op}: shapes {self.shape} and {other.shape} differ")
        return other

    def __add__(self, other) -> "Tensor":
        other = self._binary_operand(other, "add")
        a, b = self, other

        def grad_fn(g):
            return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

        return Tensor._result(a.data + b.data, (a, b), grad_fn)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._binary_operand(other, "sub")
        a, b = self, other

        def grad_fn(g):
            return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

        return Tensor._result(a.data - b.data, (a, b), grad_fn)

    def __rsub__(self, other) -> "Tensor":
        return self._binary_operand(other, "sub").__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._binary_operand(other, "mul")
        a, b = self, other

        def grad_fn(g):
            ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
            gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
            return ga, gb

        return Tensor._result(a.data * b.data, (a, b), grad_fn)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._binary_operand(other, "div")
        a, b = self, other

        def grad_fn(g):
            ga = _unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape) if b.requires_grad else None
            return ga, gb

        return Tensor._result(a.data / b.data, (a, b), grad_fn)

    def __neg__(self) -> "Tensor":
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # -- elementwise -------------------------------------------------------

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        return Tensor._result(y, (self,), lambda g: (g * (1.0 - y * y),))

    def sigmoid(self) -> "Tensor":
        y = _sigmoid(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y * (1.0 - y),))

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y,))

    def log(self) -> "Tensor":
        x = self.data
        if np.any(x <= 0.0):
            raise DomainError("log requires strictly positive inputs")
        return Tensor._result(np.log(x), (self,), lambda g: (g / x,))

    def square(self) -> "Tensor":
        x = self.data
        return Tensor._result(x * x, (self,), lambda g: (2.0 * g * x,))

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp into [lo, hi]; gradient passes only where the input was inside."""
        x = self.data
        inside = (x >= lo) & (x <= hi)
        return Tensor._result(np.clip(x, lo, hi), (self,), lambda g: (g * inside,))

    # -- reductions --------------------------------------------------------

    def sum(self, axis: int | None = None) -> "Tensor":
        shape = self.data.shape
        if axis is not None and not -len(shape) <= axis < len(shape):
            raise ShapeError(f"sum: axis {axis} out of range for shape {shape}")
        if axis is None:
            value = np.asarray(self.data.sum())

            def grad_fn(g):
                return (np.full(shape, g.reshape(()), dtype=np.float64),)
        else:
            value = self.data.sum(axis=axis)

            def grad_fn(g):
                return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

        return Tensor._result(value, (self,), grad_fn)

    def mean(self, axis: int | None = None) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis] if -self.ndim <= axis < self.ndim else 1
        return self.sum(axis) * (1.0 / n)

    # -- structural --------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        try:
            value = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"reshape: cannot view {old} as {shape}") from exc
        return Tensor._result(value, (self,), lambda g: (g.reshape(old),))

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError(f"transpose needs a matrix, got shape {self.shape}")
        return Tensor._result(self.data.T, (self,), lambda g: (g.T,))

    def expand_rows(self, n: int) -> "Tensor":
        """Tile a vector of shape [k] into an [n x k] matrix."""
        if self.ndim != 1:
            raise ShapeError(f"expand_rows needs a vector, got shape {self.shape}")
        value = np.broadcast_to(self.data, (n, self.data.shape[0]))
        return Tensor._result(value, (self,), lambda g: (g.sum(axis=0),))

    def __getitem__(self, index) -> "Tensor":
        shape = self.data.shape
        value = self.data[index]
        fancy = _is_fancy(index)

        def grad_fn(g):
            full = np.zeros(shape)
            if fancy:
                np.add.at(full, index, g)
            else:
                full[index] = g
            return (full,)

        return Tensor._result(value, (self,), grad_fn)


def _raise_item(t: Tensor):
    raise ShapeError(f"item() needs a single element, got shape {t.shape}")


def _is_fancy(index) -> bool:
    if isinstance(index, tuple):
        return any(isinstance(i, (list, np.ndarray)) for i in index)
    return isinstance(index, (list, np.ndarray))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    # scalar operand broadcast against a tensor
    return np.asarray(g.sum()).reshape(shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def grad_fn(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor._result(a.data @ b.data, (a, b), grad_fn)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties send the gradient to ``a``."""
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape} differ")
    take_a = a.data <= b.data

    def grad_fn(g):
        return g * take_a, g * ~take_a

    return Tensor._result(np.where(take_a, a.data, b.data), (a, b), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._result(value, tensors, grad_fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: shapes differ {sorted(shapes)}")
    value = np.stack([t.data for t in tensors], axis=axis)

    def grad_fn(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._result(value, tensors, grad_fn)


def lstm_cell(pre: Tensor, c: Tensor) -> Tensor:
    """Fused LSTM cell.

    ``pre`` is the [B x 4H] gate pre-activation laid out as (input, forget,
    cell, output) blocks and ``c`` the [B x H] cell state.  Returns the
    [B x 2H] concatenation of the new hidden and cell states.
    """
    B, H = c.shape
    if pre.shape != (B, 4 * H):
        raise ShapeError(f"lstm_cell: pre-activation {pre.shape} does not match cell state {c.shape}")
    a = pre.data
    i = _sigmoid(a[:, :H])
    f = _sigmoid(a[:, H : 2 * H])
    g = np.tanh(a[:, 2 * H : 3 * H])
    o = _sigmoid(a[:, 3 * H :])
    c_old = c.data
    c_new = f * c_old + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    def grad_fn(grad):
        gh = grad[:, :H]
        dc = grad[:, H:] + gh * o * (1.0 - tc * tc)
        d_pre = np.empty_like(a)
        d_pre[:, :H] = dc * g * i * (1.0 - i)
        d_pre[:, H : 2 * H] = dc * c_old * f * (1.0 - f)
        d_pre[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        d_pre[:, 3 * H :] = gh * tc * o * (1.0 - o)
        return d_pre, dc * f

    return Tensor._result(np.concatenate([h_new, c_new], axis=1), (pre, c), grad_fn)
