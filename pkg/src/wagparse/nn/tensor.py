"""Dense float64 tensors with reverse-mode differentiation.

A Tensor wraps a numpy array plus the closure needed to push gradients to
its parents. ``backward()`` on a scalar runs the tape in reverse
topological order. Gradients accumulate into ``.grad`` numpy arrays.
"""

import os
from contextlib import contextmanager

import numpy as np

from ..errors import NumericError

_grad_enabled = True
_check_finite = os.environ.get("WAGPARSE_CHECK_FINITE", "") == "1"


def grad_enabled():
    return _grad_enabled


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_finite_checks(on):
    """Trap NaN/Inf in every op output (slow; used by tests)."""
    global _check_finite
    prev = _check_finite
    _check_finite = bool(on)
    return prev


def _ensure_finite(arr, where):
    if _check_finite and not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {where}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _ensure_finite(arr, "tensor construction")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward, op_name="op"):
        """Result node. ``backward(dy)`` returns one grad per parent (or None)."""
        out = cls.__new__(cls)
        arr = np.asarray(data, dtype=np.float64)
        _ensure_finite(arr, op_name)
        out.data = arr
        out.grad = None
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            np.add(self.grad, g, out=self.grad)

    def backward(self):
        if self.data.size != 1:
            raise NumericError("backward() requires a scalar loss")
        if not np.isfinite(self.data).all():
            raise NumericError("loss is not finite")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.accumulate_grad(g)
            # tape nodes are single-use; free intermediate grads eagerly
            if not isinstance(node, Parameter) and node is not self:
                node.grad = None
                node._backward = None
                node._parents = ()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable tensor. Frozen parameters are skipped by the optimizer."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name, trainable=True):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.trainable = trainable

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape}, trainable={self.trainable})"


def constant(data):
    return Tensor(data, requires_grad=False)
