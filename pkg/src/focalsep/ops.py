"""Differentiable array operations.

Each op computes its result with plain numpy, wraps it in a Tensor, and,
only when a tape is active on this thread, records a node whose closure
holds the forward values the backward pass needs. With no active tape an
op is just the numpy call plus one Tensor allocation.

Gradient conventions: relu and the min cap use subgradient 0 on the flat
side of their kink; sqrt at 0 and pow at 0 return 0 rather than inf.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError, ShortInputError
from .tape import active_tape
from .tensor import Tensor


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise binary


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor._wrap(a.data + b.data)
    tape = active_tape()
    if tape is not None:
        sa, sb = a.shape, b.shape

        def vjp(g):
            return _unbroadcast(g, sa), _unbroadcast(g, sb)

        tape.record("add", (a, b), out, vjp)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor._wrap(a.data - b.data)
    tape = active_tape()
    if tape is not None:
        sa, sb = a.shape, b.shape

        def vjp(g):
            return _unbroadcast(g, sa), _unbroadcast(-g, sb)

        tape.record("sub", (a, b), out, vjp)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor._wrap(a.data * b.data)
    tape = active_tape()
    if tape is not None:
        da, db = a.data, b.data

        def vjp(g):
            return _unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)

        tape.record("mul", (a, b), out, vjp)
    return out


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = a.data / b.data
    out = Tensor._wrap(val)  # division by zero -> non-finite -> NumericError
    tape = active_tape()
    if tape is not None:
        da, db = a.data, b.data

        def vjp(g):
            ga = _unbroadcast(g / db, da.shape)
            gb = _unbroadcast(-g * da / (db * db), db.shape)
            return ga, gb

        tape.record("div", (a, b), out, vjp)
    return out


# ---------------------------------------------------------------------------
# elementwise unary


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor._wrap(-a.data)
    tape = active_tape()
    if tape is not None:
        tape.record("neg", (a,), out, lambda g: (-g,))
    return out


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor._wrap(np.maximum(a.data, 0.0))
    tape = active_tape()
    if tape is not None:
        mask = a.data > 0

        def vjp(g):
            return (g * mask,)

        tape.record("relu", (a,), out, vjp)
    return out


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    s = _sigmoid_stable(a.data)
    out = Tensor._wrap(s)
    tape = active_tape()
    if tape is not None:

        def vjp(g):
            return (g * s * (1.0 - s),)

        tape.record("sigmoid", (a,), out, vjp)
    return out


def silu(a) -> Tensor:
    a = _as_tensor(a)
    s = _sigmoid_stable(a.data)
    out = Tensor._wrap(a.data * s)
    tape = active_tape()
    if tape is not None:
        da = a.data

        def vjp(g):
            return (g * (s + da * s * (1.0 - s)),)

        tape.record("silu", (a,), out, vjp)
    return out


def log(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.log(a.data)
    out = Tensor._wrap(val)  # non-positive input -> non-finite -> NumericError
    tape = active_tape()
    if tape is not None:
        da = a.data

        def vjp(g):
            return (g / da,)

        tape.record("log", (a,), out, vjp)
    return out


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(invalid="ignore"):
        val = np.sqrt(a.data)
    out = Tensor._wrap(val)
    tape = active_tape()
    if tape is not None:
        dv = out.data

        def vjp(g):
            grad = np.zeros_like(dv)
            nz = dv > 0
            grad[nz] = g[nz] / (2.0 * dv[nz])
            return (grad,)

        tape.record("sqrt", (a,), out, vjp)
    return out


def pow_scalar(a, p: float) -> Tensor:
    """Elementwise a**p for a python-float exponent."""
    a = _as_tensor(a)
    p = float(p)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = a.data ** p
    out = Tensor._wrap(val)
    tape = active_tape()
    if tape is not None:
        da = a.data

        def vjp(g):
            if p == 1.0:
                return (np.array(g, copy=True),)
            grad = np.zeros_like(da)
            nz = da != 0
            grad[nz] = p * da[nz] ** (p - 1.0) * g[nz]
            return (grad,)

        tape.record("pow_scalar", (a,), out, vjp)
    return out


def minimum_scalar(a, cap: float) -> Tensor:
    """Elementwise min(a, cap); gradient passes where a <= cap."""
    a = _as_tensor(a)
    cap = float(cap)
    out = Tensor._wrap(np.minimum(a.data, cap))
    tape = active_tape()
    if tape is not None:
        mask = a.data <= cap

        def vjp(g):
            return (g * mask,)

        tape.record("minimum_scalar", (a,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# reductions


def sum_all(a) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    a = _as_tensor(a)
    out = Tensor._wrap(np.array(np.sum(a.data)))
    tape = active_tape()
    if tape is not None:
        shape = a.shape

        def vjp(g):
            return (np.full(shape, float(g), dtype=np.float64),)

        tape.record("sum_all", (a,), out, vjp)
    return out


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    return mul(sum_all(a), 1.0 / a.size)


def row_sum(a) -> Tensor:
    """Sum over the last axis of a matrix, keeping it as N x 1."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"row_sum needs a matrix, got shape {a.shape}")
    out = Tensor._wrap(a.data.sum(axis=1, keepdims=True))
    tape = active_tape()
    if tape is not None:
        shape = a.shape

        def vjp(g):
            return (np.broadcast_to(g, shape),)

        tape.record("row_sum", (a,), out, vjp)
    return out


def col_sum(a) -> Tensor:
    """Sum over the first axis of a matrix, keeping it as 1 x d."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"col_sum needs a matrix, got shape {a.shape}")
    out = Tensor._wrap(a.data.sum(axis=0, keepdims=True))
    tape = active_tape()
    if tape is not None:
        shape = a.shape

        def vjp(g):
            return (np.broadcast_to(g, shape),)

        tape.record("col_sum", (a,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# structure


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor._wrap(a.data @ b.data)
    tape = active_tape()
    if tape is not None:
        da, db = a.data, b.data

        def vjp(g):
            return g @ db.T, da.T @ g

        tape.record("matmul", (a, b), out, vjp)
    return out


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got shape {a.shape}")
    out = Tensor._wrap(np.ascontiguousarray(a.data.T))
    tape = active_tape()
    if tape is not None:
        tape.record("transpose", (a,), out, lambda g: (g.T,))
    return out


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor._wrap(a.data.reshape(shape).copy())
    tape = active_tape()
    if tape is not None:
        orig = a.shape

        def vjp(g):
            return (g.reshape(orig),)

        tape.record("reshape", (a,), out, vjp)
    return out


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"slice_cols needs a matrix, got shape {a.shape}")
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"column slice [{start}:{stop}] out of range for {a.shape}")
    out = Tensor._wrap(a.data[:, start:stop].copy())
    tape = active_tape()
    if tape is not None:
        shape = a.shape

        def vjp(g):
            full = np.zeros(shape, dtype=np.float64)
            full[:, start:stop] = g
            return (full,)

        tape.record("slice_cols", (a,), out, vjp)
    return out


def concat_cols(parts: list[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols needs at least one part")
    for p in parts:
        if p.ndim != 2 or p.shape[0] != parts[0].shape[0]:
            raise ShapeError(f"concat_cols row counts disagree: {[q.shape for q in parts]}")
    out = Tensor._wrap(np.concatenate([p.data for p in parts], axis=1))
    tape = active_tape()
    if tape is not None:
        widths = [p.shape[1] for p in parts]

        def vjp(g):
            grads = []
            at = 0
            for w in widths:
                grads.append(g[:, at:at + w])
                at += w
            return tuple(grads)

        tape.record("concat_cols", tuple(parts), out, vjp)
    return out


def narrow0(a, start: int, length: int) -> Tensor:
    """Contiguous slice [start : start+length] along the first axis."""
    a = _as_tensor(a)
    if not (0 <= start and start + length <= a.shape[0]):
        raise ShapeError(f"row slice [{start}:{start + length}] out of range for {a.shape}")
    out = Tensor._wrap(a.data[start:start + length].copy())
    tape = active_tape()
    if tape is not None:
        shape = a.shape

        def vjp(g):
            full = np.zeros(shape, dtype=np.float64)
            full[start:start + length] = g
            return (full,)

        tape.record("narrow0", (a,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# normalization and attention primitives


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor._wrap(xhat * gain.data + bias.data)
    tape = active_tape()
    if tape is not None:
        gval = gain.data

        def vjp(g):
            red = tuple(range(g.ndim - 1))
            dxhat = g * gval
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            dx = inv * (dxhat - m1 - xhat * m2)
            dgain = (g * xhat).sum(axis=red) if red else g * xhat
            dbias = g.sum(axis=red) if red else np.array(g, copy=True)
            return dx, dgain, dbias

        tape.record("layer_norm", (x, gain, bias), out, vjp)
    return out


def softmax_rows(s) -> Tensor:
    """Row-wise softmax with max subtraction."""
    s = _as_tensor(s)
    if s.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got shape {s.shape}")
    z = s.data - s.data.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    out = Tensor._wrap(z)
    tape = active_tape()
    if tape is not None:
        y = out.data

        def vjp(g):
            return ((g - (g * y).sum(axis=1, keepdims=True)) * y,)

        tape.record("softmax_rows", (s,), out, vjp)
    return out


def depthwise_conv1d(x, kernel) -> Tensor:
    """Per-channel 1-d convolution, same length via symmetric zero padding.

    x is time x channels, kernel is channels x k with k odd; channel c is
    convolved only with kernel row c.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 2 or kernel.ndim != 2:
        raise ShapeError(f"depthwise_conv1d needs matrices, got {x.shape} and {kernel.shape}")
    n, c = x.shape
    ck, k = kernel.shape
    if ck != c:
        raise ShapeError(f"kernel has {ck} rows for {c} channels")
    if k % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {k}")
    pad = (k - 1) // 2
    xp = np.zeros((n + k - 1, c), dtype=np.float64)
    xp[pad:pad + n] = x.data
    y = np.zeros((n, c), dtype=np.float64)
    for j in range(k):
        y += kernel.data[:, j] * xp[j:j + n]
    out = Tensor._wrap(y)
    tape = active_tape()
    if tape is not None:
        kval = kernel.data

        def vjp(g):
            gp = np.zeros((n + k - 1, c), dtype=np.float64)
            gp[pad:pad + n] = g
            dx = np.zeros((n, c), dtype=np.float64)
            dk = np.zeros((c, k), dtype=np.float64)
            for j in range(k):
                dx += kval[:, k - 1 - j] * gp[j:j + n]
                dk[:, j] = (g * xp[j:j + n]).sum(axis=0)
            return dx, dk

        tape.record("depthwise_conv1d", (x, kernel), out, vjp)
    return out


# ---------------------------------------------------------------------------
# framing


def frame_signal(w, size: int, stride: int) -> Tensor:
    """Strided frames of a 1-d signal: row t = w[t*stride : t*stride+size]."""
    w = _as_tensor(w)
    if w.ndim != 1:
        raise ShapeError(f"frame_signal needs a 1-d signal, got shape {w.shape}")
    if size < 1 or stride < 1:
        raise ConfigError(f"frame size {size} and stride {stride} must be positive")
    length = w.shape[0]
    if length < size:
        raise ShortInputError(f"signal length {length} is shorter than frame size {size}")
    n = (length - size) // stride + 1
    frames = np.lib.stride_tricks.sliding_window_view(w.data, size)[::stride].copy()
    out = Tensor._wrap(frames)
    tape = active_tape()
    if tape is not None:

        def vjp(g):
            dw = np.zeros(length, dtype=np.float64)
            for j in range(size):
                dw[j:j + n * stride:stride] += g[:, j]
            return (dw,)

        tape.record("frame_signal", (w,), out, vjp)
    return out


def overlap_add(frames, stride: int, length: int) -> Tensor:
    """Rebuild a signal from strided frames.

    Overlapping samples are averaged (sum divided by overlap count); any
    tail beyond frame coverage is zero, and frames past `length` are cut.
    """
    frames = _as_tensor(frames)
    if frames.ndim != 2:
        raise ShapeError(f"overlap_add needs a frame matrix, got shape {frames.shape}")
    if stride < 1 or length < 1:
        raise ConfigError(f"stride {stride} and length {length} must be positive")
    n, size = frames.shape
    cover = (n - 1) * stride + size
    ext = max(cover, length)
    buf = np.zeros(ext, dtype=np.float64)
    cnt = np.zeros(ext, dtype=np.float64)
    for j in range(size):
        buf[j:j + n * stride:stride] += frames.data[:, j]
        cnt[j:j + n * stride:stride] += 1.0
    safe = np.maximum(cnt, 1.0)
    buf /= safe
    out = Tensor._wrap(buf[:length].copy())
    tape = active_tape()
    if tape is not None:

        def vjp(g):
            gfull = np.zeros(ext, dtype=np.float64)
            gfull[:length] = g
            gfull /= safe
            df = np.empty((n, size), dtype=np.float64)
            for j in range(size):
                df[:, j] = gfull[j:j + n * stride:stride]
            return (df,)

        tape.record("overlap_add", (frames,), out, vjp)
    return out
