"""Tensors and the gradient tape.

A :class:`Tape` is an append-only list of nodes. Each node stores the handles
of its inputs and a vector-Jacobian product closure over snapshots of what it
needs, so backward is a single pass over the nodes in reverse insertion order.

Tensors without a tape are plain detached values; ops on them do not record.
"""
from __future__ import annotations

import numpy as np

from ..errors import AlreadyConsumed, NotScalar, ShapeMismatch


def _frozen(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


class Tensor:
    __slots__ = ("data", "tape", "node", "requires_grad", "grad", "name")
    __array_priority__ = 100

    def __init__(self, data, tape=None, node=None, requires_grad=False, name=None, _copy=True):
        if _copy:
            self.data = _frozen(data)
        else:
            self.data = np.asarray(data, dtype=np.float64)
            self.data.flags.writeable = False
        self.tape = tape
        self.node = node
        self.requires_grad = requires_grad
        self.grad = None
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

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data, _copy=False)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f", node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self):
        return self.data.shape[0]

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return ops.mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from . import ops
        return ops.slice(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)

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


class Tape:
    """Records operations for one reverse pass."""

    def __init__(self):
        self._parents: list[tuple] = []
        self._vjps: list = []
        self._leaves: dict[int, Tensor] = {}
        self._consumed = False
        self._grads = None

    def __len__(self):
        return len(self._vjps)

    def variable(self, data, name=None) -> Tensor:
        """Register a leaf that gradients are accumulated for."""
        t = Tensor(data, tape=self, requires_grad=True, name=name)
        t.node = self._append((), None)
        self._leaves[t.node] = t
        return t

    def _append(self, parents, vjp) -> int:
        if self._consumed:
            raise AlreadyConsumed("tape already consumed by backward")
        self._parents.append(parents)
        self._vjps.append(vjp)
        return len(self._vjps) - 1

    def record(self, data: np.ndarray, inputs, vjp) -> Tensor:
        """Append a node for ``data`` computed from ``inputs``.

        ``vjp(g)`` returns one gradient (or None) per entry of ``inputs``.
        """
        parents = tuple(x.node if isinstance(x, Tensor) and x.tape is self else None
                        for x in inputs)
        node = self._append(parents, vjp)
        return Tensor(data, tape=self, node=node, requires_grad=True, _copy=False)

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise AlreadyConsumed("backward already run on this tape")
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise ValueError("loss is not recorded on this tape")
        if loss.data.ndim != 0:
            raise NotScalar(f"loss must be 0-d, got shape {loss.shape}")
        grads: list = [None] * len(self._vjps)
        grads[loss.node] = np.ones(())
        for idx in range(loss.node, -1, -1):
            g = grads[idx]
            vjp = self._vjps[idx]
            if g is None or vjp is None:
                continue
            if idx not in self._leaves:
                grads[idx] = None
            for parent, pg in zip(self._parents[idx], vjp(g)):
                if parent is None or pg is None:
                    continue
                if grads[parent] is None:
                    grads[parent] = pg
                else:
                    grads[parent] = grads[parent] + pg
            self._vjps[idx] = None
        for node, leaf in self._leaves.items():
            g = grads[node]
            leaf.grad = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=np.float64)
        self._consumed = True

    def gradient(self, tensor: Tensor) -> np.ndarray:
        if not self._consumed:
            raise RuntimeError("call backward first")
        if tensor.tape is not self or tensor.node not in self._leaves:
            raise KeyError("tensor is not a leaf of this tape")
        return tensor.grad


def backward(tape: Tape, loss: Tensor) -> Tape:
    tape.backward(loss)
    return tape


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tape_of(*inputs):
    tape = None
    for x in inputs:
        if isinstance(x, Tensor) and x.tape is not None:
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("inputs are recorded on different tapes")
    return tape


def shape_error(op, *shapes):
    named = " and ".join(str(tuple(s)) for s in shapes)
    return ShapeMismatch(f"{op}: incompatible shapes {named}")
