"""Dense tensors and the recording tape for reverse-mode differentiation."""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_ids = itertools.count(1)
_local = threading.local()


class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


class DimensionError(ContractError):
    pass


class DiffTensor:
    """A dense real tensor that can take part in reverse-mode differentiation.

    Complex quantities are carried as a trailing axis of size 2 (real, imag)
    or as separate real/imaginary tensors.
    """

    __slots__ = ("data", "requires_grad", "node_id")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None and not isinstance(data, (np.ndarray, np.floating)):
            dtype = DEFAULT_DTYPE
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DiffTensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x, dtype=None) -> DiffTensor:
    if isinstance(x, DiffTensor):
        return x
    return DiffTensor(x, dtype=dtype)


def parameter(data) -> DiffTensor:
    """Trainable leaf tensor (float32)."""
    return DiffTensor(np.asarray(data, dtype=DEFAULT_DTYPE), requires_grad=True)


@dataclass
class _Record:
    out_id: int
    parents: tuple
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered log of differentiable operations.

    Operations append themselves while the tape is active (``with Tape():``).
    Records are appended after their inputs exist, so the list is already in
    topological order and a single reverse sweep computes all gradients.
    """

    records: list = field(default_factory=list)
    _produced: set = field(default_factory=set)

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out: DiffTensor, parents: Sequence[DiffTensor], backward) -> None:
        self.records.append(_Record(out.node_id, tuple(parents), backward))
        self._produced.add(out.node_id)

    def backward(self, loss: DiffTensor) -> dict[int, np.ndarray]:
        """Reverse sweep from a scalar ``loss``.

        Returns a map node_id -> gradient for every leaf that requires grad
        and is reachable from the loss.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        leaves: dict[int, DiffTensor] = {}
        for rec in reversed(self.records):
            g = grads.pop(rec.out_id, None)
            if g is None:
                continue
            parent_grads = rec.backward(g)
            for p, pg in zip(rec.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if p.node_id not in self._produced:
                    leaves[p.node_id] = p
                prev = grads.get(p.node_id)
                if prev is None:
                    grads[p.node_id] = pg
                else:
                    grads[p.node_id] = prev + pg
        if loss.requires_grad and loss.node_id not in self._produced:
            leaves[loss.node_id] = loss
        return {nid: grads[nid] for nid in leaves if nid in grads}


def active_tape() -> Tape | None:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def make_result(data: np.ndarray, parents: Sequence[DiffTensor], backward) -> DiffTensor:
    """Wrap ``data`` as the output of an op and record it if needed."""
    needs = any(p.requires_grad for p in parents)
    out = DiffTensor(data, requires_grad=needs)
    if needs:
        tape = active_tape()
        if tape is not None:
            tape.record(out, parents, backward)
        else:
            out.requires_grad = False
    return out


def backward(loss: DiffTensor, tape: Tape | None = None) -> dict[int, np.ndarray]:
    tape = tape if tape is not None else active_tape()
    if tape is None:
        raise ContractError("backward() called with no active tape")
    return tape.backward(loss)
