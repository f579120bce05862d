"""Dense float64 tensor value type with live-allocation instrumentation.

Every tensor owns a fresh C-contiguous float64 buffer. A process-global
counter tracks the number of currently live tensor elements and its
high-water mark; the benchmark module uses that mark as its memory metric,
so element accounting must stay exact and deterministic.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import NumericError


class _AllocCounter:
    """Process-global count of live tensor elements plus high-water mark."""

    def __init__(self):
        self._lock = threading.Lock()
        self._live = 0
        self._peak = 0

    def add(self, n: int):
        with self._lock:
            self._live += n
            if self._live > self._peak:
                self._peak = self._live

    def sub(self, n: int):
        with self._lock:
            self._live -= n

    def live(self) -> int:
        with self._lock:
            return self._live

    def peak(self) -> int:
        with self._lock:
            return self._peak

    def reset_peak(self) -> int:
        """Set the high-water mark to the current live count and return it."""
        with self._lock:
            self._peak = self._live
            return self._peak


_COUNTER = _AllocCounter()


def live_elements() -> int:
    """Number of tensor elements currently alive in the process."""
    return _COUNTER.live()


def peak_elements() -> int:
    """High-water mark of live tensor elements since the last reset."""
    return _COUNTER.peak()


def reset_peak_elements() -> int:
    """Reset the high-water mark to the current live count."""
    return _COUNTER.reset_peak()


def _check_finite(arr: np.ndarray, context: str):
    # A full isfinite scan would allocate an equally large bool array; the
    # sum is NaN-poisoned and Inf-propagating, so one reduction suffices.
    if arr.size and not np.isfinite(np.sum(arr)):
        raise NumericError(f"non-finite values in {context}")


class Tensor:
    """Immutable dense array: a shape plus a row-major float64 buffer.

    Construct from nested lists, scalars, or ndarrays; the data is always
    copied into a fresh contiguous buffer. Library code uses ``_wrap`` to
    adopt buffers it already owns. Non-finite content is rejected at
    construction, so NaN/Inf can never silently propagate through ops.
    """

    __slots__ = ("data", "__weakref__")

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C")
        _check_finite(arr, "tensor construction")
        self.data = arr
        _COUNTER.add(arr.size)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt a freshly computed array without copying.

        The caller must own ``arr`` exclusively (no outstanding views).
        """
        if arr.dtype != np.float64 or not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
        _check_finite(arr, "op result")
        t = cls.__new__(cls)
        t.data = arr
        _COUNTER.add(arr.size)
        return t

    def __del__(self):
        data = getattr(self, "data", None)
        if data is not None:
            try:
                _COUNTER.sub(data.size)
            except Exception:
                pass  # interpreter shutdown

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(())[()])

    def __float__(self) -> float:
        return self.item()

    def copy(self) -> "Tensor":
        return Tensor(self.data)

    def assign_(self, arr: np.ndarray):
        """Overwrite the buffer in place (optimizer updates between tapes).

        Must not be called on a tensor that participates in a live recorded
        graph; shape is fixed.
        """
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != self.data.shape:
            raise ValueError(f"assign_ shape mismatch: {arr.shape} vs {self.data.shape}")
        _check_finite(arr, "assign_")
        self.data[...] = arr

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={np.array2string(self.data, threshold=8)})"

    # Arithmetic sugar delegates to the ops module (imported lazily to keep
    # the tensor/ops layering acyclic at import time).
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops

        return ops.add(self, other)

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

        return ops.mul(self, other)

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(other, self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops

        return ops.neg(self)


def zeros(*shape: int) -> Tensor:
    return Tensor._wrap(np.zeros(shape, dtype=np.float64))


def ones(*shape: int) -> Tensor:
    return Tensor._wrap(np.ones(shape, dtype=np.float64))


def full(shape: tuple[int, ...], value: float) -> Tensor:
    return Tensor._wrap(np.full(shape, value, dtype=np.float64))


def full_like(t: Tensor, value: float) -> Tensor:
    return Tensor._wrap(np.full(t.shape, value, dtype=np.float64))


def eye(n: int) -> Tensor:
    return Tensor._wrap(np.eye(n, dtype=np.float64))


def randn(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor._wrap(rng.standard_normal(shape) * scale)
