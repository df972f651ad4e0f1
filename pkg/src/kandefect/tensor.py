"""Dense float64 tensors and a reverse-mode gradient tape.

Every primitive in this package goes through :func:`forward_record`: it
computes its output eagerly with numpy and, when a :class:`Tape` is active,
appends the op together with a closure that maps the output gradient to
input gradients.  :meth:`Tape.backward` replays those closures in exact
reverse recording order and accumulates (``+=``) into ``Tensor.grad`` of
every leaf that requires a gradient.  Buffers are never zeroed implicitly;
call :meth:`Tensor.zero_grad` between optimizer steps.

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> x = Tensor([3.0, 4.0])
    >>> with Tape() as tape:
    ...     loss = (w * x).sum()
    >>> grads = tape.backward(loss)
    >>> grads[w].tolist()
    [3.0, 4.0]
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Record",
    "ShapeError",
    "TapeError",
    "forward_record",
    "active_tape",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "reshape",
    "sum_all",
    "mean_all",
    "einsum",
]


class ShapeError(ValueError):
    """Raised when a primitive receives operands with incompatible shapes."""

    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")
        self.op = op


class TapeError(RuntimeError):
    pass


class Tensor:
    """Row-major float64 array with an optional gradient buffer."""

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


_TAPES: list["Tape"] = []


def active_tape() -> "Tape | None":
    return _TAPES[-1] if _TAPES else None


class Tape:
    """Ordered log of primitive ops; use as a context manager."""

    def __init__(self):
        self.records: list[Record] = []

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    @property
    def ops(self) -> list[str]:
        return [r.op for r in self.records]

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Propagate d(loss) back through the tape.

        Returns a map from every gradient-requiring leaf seen on the tape to
        its gradient from this call (zeros when the leaf did not influence
        the loss).  The same values are added into each leaf's ``grad``.
        """
        if not self.records:
            raise TapeError("backward: tape is empty")
        if loss.size != 1:
            raise TapeError(f"backward: loss must be scalar, got shape {loss.shape}")

        produced = {id(r.output) for r in self.records}
        leaves: dict[int, Tensor] = {}
        for r in self.records:
            for t in r.inputs:
                if t.requires_grad and id(t) not in produced and id(t) not in leaves:
                    leaves[id(t)] = t

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for r in reversed(self.records):
            g = grads.pop(id(r.output), None)
            if g is None or not r.output.requires_grad:
                continue
            for t, gi in zip(r.inputs, r.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                if gi.shape != t.shape:
                    raise ShapeError(r.op, f"gradient shape {gi.shape} != input shape {t.shape}")
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi

        out: dict[Tensor, np.ndarray] = {}
        for key, t in leaves.items():
            g = grads.get(key)
            g = np.zeros_like(t.data) if g is None else np.asarray(g, dtype=np.float64)
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad += g
            out[t] = g
        return out


def forward_record(op: str, inputs: Sequence[Tensor], data: np.ndarray, backward) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and log it on the active tape."""
    inputs = tuple(inputs)
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    tape = active_tape()
    if tape is not None:
        tape.records.append(Record(op, inputs, out, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return forward_record("add", (a, b), a.data + b.data, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return forward_record("sub", (a, b), a.data - b.data, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return forward_record("mul", (a, b), a.data * b.data, backward)


def scale(a: Tensor, factor: float) -> Tensor:
    return forward_record("scale", (a,), a.data * factor, lambda g: (g * factor,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", f"cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return forward_record("matmul", (a, b), a.data @ b.data, backward)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose", f"axes {axes} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return forward_record("transpose", (a,), a.data.transpose(axes), lambda g: (g.transpose(inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {a.shape} to {tuple(shape)}") from None
    return forward_record("reshape", (a,), data, lambda g: (g.reshape(a.shape),))


def sum_all(a: Tensor) -> Tensor:
    return forward_record("sum", (a,), np.asarray(a.data.sum()), lambda g: (np.full(a.shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    return forward_record("mean", (a,), np.asarray(a.data.mean()), lambda g: (np.full(a.shape, float(g) / n),))


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum without repeated or summed-only-in-one-operand indices.

    Every index of an operand must appear either in the other operand or in
    the output, so both input gradients are themselves plain einsums.
    """
    lhs, out_sub = subscripts.replace(" ", "").split("->")
    a_sub, b_sub = lhs.split(",")
    for s in (a_sub, b_sub, out_sub):
        if len(set(s)) != len(s):
            raise ValueError(f"einsum: repeated index in {s!r}")
    for s, other in ((a_sub, b_sub), (b_sub, a_sub)):
        if not set(s) <= set(other) | set(out_sub):
            raise ValueError(f"einsum: index of {s!r} reduced without partner in {subscripts!r}")
    if len(a_sub) != a.ndim or len(b_sub) != b.ndim:
        raise ShapeError("einsum", f"{subscripts!r} does not match shapes {a.shape}, {b.shape}")
    try:
        data = np.einsum(f"{a_sub},{b_sub}->{out_sub}", a.data, b.data)
    except ValueError as exc:
        raise ShapeError("einsum", f"{subscripts!r} with {a.shape}, {b.shape}: {exc}") from None

    def backward(g):
        ga = np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, b.data) if a.requires_grad else None
        gb = np.einsum(f"{out_sub},{a_sub}->{b_sub}", g, a.data) if b.requires_grad else None
        return ga, gb

    return forward_record("einsum", (a, b), data, backward)
