"""Reverse-mode autodiff tape.

Ops record onto whichever tape is active on the current thread; with no
active tape they are plain numpy computations with zero bookkeeping, which
keeps inference and benchmark timings honest. A tape owns an ordered list
of nodes (inputs always precede their consumers) and the backward pass
walks that list once in reverse, accumulating vector-Jacobian products.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterator

import numpy as np

from .errors import ContractError
from .tensor import Tensor

_STATE = threading.local()


def _stack() -> list:
    s = getattr(_STATE, "stack", None)
    if s is None:
        s = []
        _STATE.stack = s
    return s


def active_tape() -> "Tape | None":
    """The tape currently recording on this thread, or None."""
    s = _stack()
    return s[-1] if s else None


class Node:
    """One recorded op: its inputs, its output, and a VJP closure.

    ``vjp`` maps the gradient w.r.t. the output to a tuple of gradients
    w.r.t. the inputs (entries may be None for non-differentiable slots).
    Forward values an op needs are captured inside the closure.
    """

    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
                 vjp: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp

    def __repr__(self) -> str:
        return f"Node({self.op}, inputs={len(self.inputs)}, out={self.output.shape})"


class Tape:
    """Ordered record of ops, usable as a context manager.

    A tape is single-owner: record on it from one thread only. Leaf
    tensors whose gradients should survive into the GradMap are declared
    with ``watch``.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._watched: dict[str, Tensor] = {}

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        top = _stack().pop()
        if top is not self:
            raise ContractError("tape context exited out of order")
        return False

    def watch(self, tensor: Tensor, name: str):
        """Register a leaf tensor under a unique name."""
        if name in self._watched:
            raise ContractError(f"name {name!r} already watched on this tape")
        self._watched[name] = tensor

    def watched(self) -> dict[str, Tensor]:
        return dict(self._watched)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, vjp):
        self.nodes.append(Node(op, inputs, output, vjp))


class _SuppressRecording:
    def __enter__(self):
        _stack().append(None)
        return None

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False


def stop_recording() -> _SuppressRecording:
    """Context manager that pauses recording on the current thread."""
    return _SuppressRecording()


class GradMap:
    """Gradients keyed by watch name; shapes match the watched tensors."""

    def __init__(self, grads: dict[str, Tensor]):
        self._grads = grads

    def __getitem__(self, name: str) -> Tensor:
        if name not in self._grads:
            raise KeyError(f"no gradient recorded under {name!r}")
        return self._grads[name]

    def __contains__(self, name: str) -> bool:
        return name in self._grads

    def __iter__(self) -> Iterator[str]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def items(self):
        return self._grads.items()

    def names(self) -> list[str]:
        return list(self._grads)


def backward(tape: Tape, loss: Tensor) -> GradMap:
    """Accumulate d(loss)/d(leaf) for every watched leaf on the tape.

    The loss must be a scalar (single-element) tensor that lives on the
    tape, either as an op output or as a watched leaf. Each node is
    visited exactly once, in reverse recording order.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("loss must be a Tensor")
    if loss.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    on_tape = any(node.output is loss for node in tape.nodes)
    if not on_tape and not any(t is loss for t in tape._watched.values()):
        raise ContractError("loss is not a node on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=np.float64)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.output))
        if g is None:
            continue
        in_grads = node.vjp(g)
        for t, ig in zip(node.inputs, in_grads):
            if ig is None:
                continue
            acc = grads.get(id(t))
            if acc is None:
                grads[id(t)] = np.array(ig, dtype=np.float64, copy=True)
            else:
                acc += ig

    out: dict[str, Tensor] = {}
    for name, t in tape._watched.items():
        g = grads.get(id(t))
        if g is None:
            out[name] = Tensor._wrap(np.zeros(t.shape, dtype=np.float64))
        else:
            # accumulated buffers are always fresh contiguous copies; wrap
            # directly (ascontiguousarray would promote 0-d shapes to (1,))
            out[name] = Tensor._wrap(g)
    return GradMap(out)
