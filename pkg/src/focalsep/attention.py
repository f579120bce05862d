"""Attention family: softmax reference, linear attention, and the focused
variant with depthwise rank correction, plus multi-head and gated wrappers.

The focused feature map sharpens relative component magnitudes by an
elementwise power while preserving each row's norm, which lets the linear
(order-reassociated) attention behave closer to softmax attention. Its
rank deficit (the similarity matrix has rank at most d) is repaired by
adding a depthwise convolution over the value sequence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import ops
from .errors import ConfigError, DegenerateRowWarning, ShapeError
from .tensor import Tensor


class AttentionMode(Enum):
    SOFTMAX = "softmax"
    VLA = "vla"
    FLA = "fla"


@dataclass
class FlaParams:
    """Projection weights and settings for one attention block."""

    Wq: Tensor
    Wk: Tensor
    Wv: Tensor
    Wo: Tensor
    dwc_kernel: Tensor
    Wg: Tensor
    norm_gain: Tensor
    norm_bias: Tensor
    p: float
    k: int
    h: int

    def __post_init__(self):
        d = self.Wq.shape[0]
        for name in ("Wq", "Wk", "Wv", "Wo", "Wg"):
            if getattr(self, name).shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}, got {getattr(self, name).shape}")
        if self.dwc_kernel.shape != (d, self.k):
            raise ShapeError(
                f"dwc_kernel must be {d}x{self.k}, got {self.dwc_kernel.shape}")
        if self.norm_gain.shape != (d,) or self.norm_bias.shape != (d,):
            raise ShapeError("norm gain/bias must be 1-d of width d")
        if self.p <= 0:
            raise ConfigError(f"focus factor must be positive, got {self.p}")
        if self.k % 2 == 0 or self.k < 1:
            raise ConfigError(f"conv kernel size must be odd, got {self.k}")
        if self.h < 1 or d % self.h != 0:
            raise ConfigError(f"width {d} is not divisible by head count {self.h}")

    @property
    def d(self) -> int:
        return self.Wq.shape[0]

    @classmethod
    def init(cls, d: int, h: int, p: float = 3.0, k: int = 7,
             rng: np.random.Generator | None = None) -> "FlaParams":
        """Random projections at 1/sqrt(d) scale; conv kernel starts as a
        delta (identity) plus sigma=0.02 noise so the block begins near
        plain linear attention with an identity skip on V."""
        rng = rng if rng is not None else np.random.default_rng(0)
        scale = 1.0 / np.sqrt(d)
        delta = np.zeros((d, k))
        delta[:, (k - 1) // 2] = 1.0
        return cls(
            Wq=Tensor._wrap(rng.standard_normal((d, d)) * scale),
            Wk=Tensor._wrap(rng.standard_normal((d, d)) * scale),
            Wv=Tensor._wrap(rng.standard_normal((d, d)) * scale),
            Wo=Tensor._wrap(rng.standard_normal((d, d)) * scale),
            dwc_kernel=Tensor._wrap(delta + rng.standard_normal((d, k)) * 0.02),
            Wg=Tensor._wrap(rng.standard_normal((d, d)) * scale),
            norm_gain=Tensor._wrap(np.ones(d)),
            norm_bias=Tensor._wrap(np.zeros(d)),
            p=float(p), k=int(k), h=int(h),
        )

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [("Wq", self.Wq), ("Wk", self.Wk), ("Wv", self.Wv), ("Wo", self.Wo),
                ("dwc_kernel", self.dwc_kernel), ("Wg", self.Wg),
                ("norm_gain", self.norm_gain), ("norm_bias", self.norm_bias)]


def focused_feature_map(x: Tensor, p: float, eps: float = 1e-12) -> Tensor:
    """Row-wise map r -> (|r| / |r**p|) * r**p with r = ReLU(row).

    Raises each nonnegative component to the power p, then rescales the
    row back to its pre-power norm, so relative magnitudes sharpen while
    the row norm is preserved. Rows are max-normalized before powering
    purely for numerical range (the result is scale-free), which keeps
    the eps guard at most 1e-12 relative for every p.
    """
    if p <= 0:
        raise ConfigError(f"focus factor must be positive, got {p}")
    if x.ndim != 2:
        raise ShapeError(f"focused_feature_map needs a matrix, got shape {x.shape}")
    r = ops.relu(x)
    rowmax = r.data.max(axis=1, keepdims=True)
    inv_max = Tensor._wrap(1.0 / np.where(rowmax > 0, rowmax, 1.0))
    u = ops.mul(r, inv_max)
    v = ops.pow_scalar(u, float(p))
    norm_r = ops.sqrt(ops.row_sum(ops.mul(r, r)))
    norm_v = ops.sqrt(ops.row_sum(ops.mul(v, v)))
    return ops.mul(v, ops.div(norm_r, ops.add(norm_v, eps)))


def relu_kernel(x: Tensor) -> Tensor:
    """Plain nonnegative feature map for vanilla linear attention."""
    return ops.relu(x)


def focused_kernel(p: float, eps: float = 1e-12) -> Callable[[Tensor], Tensor]:
    def kernel(x: Tensor) -> Tensor:
        return focused_feature_map(x, p, eps)

    return kernel


def _check_qkv(q: Tensor, k: Tensor, v: Tensor):
    if q.ndim != 2 or q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(f"Q/K/V shapes disagree: {q.shape}, {k.shape}, {v.shape}")


def softmax_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Reference attention: softmax(Q Kᵀ / sqrt(d)) V.

    Builds the N x N weight matrix explicitly, so time and transient
    memory are quadratic in sequence length by construction. Outside of
    recording, the weight matrix is normalized in place so only a single
    N x N buffer is ever live.
    """
    from .tape import active_tape

    _check_qkv(q, k, v)
    scale = 1.0 / np.sqrt(q.shape[1])
    if active_tape() is None:
        s = Tensor._wrap(q.data @ k.data.T)
        buf = s.data
        buf *= scale
        buf -= buf.max(axis=1, keepdims=True)
        np.exp(buf, out=buf)
        buf /= buf.sum(axis=1, keepdims=True)
        return Tensor._wrap(buf @ v.data)
    scores = ops.mul(ops.matmul(q, ops.transpose(k)), scale)
    return ops.matmul(ops.softmax_rows(scores), v)


def _degenerate_mask(den_raw: np.ndarray, eps: float) -> np.ndarray | None:
    """0/1 column marking rows whose normalizer is below eps, or None."""
    bad = den_raw < eps
    if not bad.any():
        return None
    warnings.warn(
        "attention rows with an underflowed normalizer were zeroed",
        DegenerateRowWarning, stacklevel=3)
    return (~bad).astype(np.float64)


def vanilla_linear_attention(q: Tensor, k: Tensor, v: Tensor,
                             kernel: Callable[[Tensor], Tensor] = relu_kernel,
                             order: str = "linear", eps: float = 1e-12) -> Tensor:
    """Linear attention with a nonnegative feature map.

    order="quadratic" materializes the N x N similarity matrix and
    row-normalizes it; order="linear" reassociates to φ(K)ᵀV first and
    never builds an N x N intermediate, at O(N d²) cost. The two orders
    agree to floating tolerance. Rows whose normalizer underflows eps
    yield zero rows (flagged with DegenerateRowWarning) instead of NaN.
    """
    _check_qkv(q, k, v)
    phi_q = kernel(q)
    phi_k = kernel(k)
    if order == "quadratic":
        sim = ops.matmul(phi_q, ops.transpose(phi_k))
        den = ops.row_sum(sim)
        mask = _degenerate_mask(den.data, eps)
        if mask is None:
            weights = ops.div(sim, den)
            return ops.matmul(weights, v)
        mask_t = Tensor._wrap(mask)
        guarded = ops.add(ops.mul(den, mask_t), Tensor._wrap(1.0 - mask))
        weights = ops.div(sim, guarded)
        return ops.mul(ops.matmul(weights, v), mask_t)
    if order == "linear":
        kv = ops.matmul(ops.transpose(phi_k), v)
        ksum = ops.col_sum(phi_k)
        num = ops.matmul(phi_q, kv)
        den = ops.matmul(phi_q, ops.transpose(ksum))
        out = ops.div(num, ops.add(den, eps))
        mask = _degenerate_mask(den.data, eps)
        if mask is not None:
            out = ops.mul(out, Tensor._wrap(mask))
        return out
    raise ConfigError(f"unknown evaluation order {order!r}")


def focused_linear_attention(q: Tensor, k: Tensor, v: Tensor, p: float,
                             dwc_kernel: Tensor, eps: float = 1e-12) -> Tensor:
    """Linear attention under the focused map plus depthwise conv on V.

    The conv term re-injects local, per-channel structure whose linear
    map is (near) identity at delta initialization, lifting the rank of
    the end-to-end token mixing map back toward min(N, d + rank of conv).
    """
    attn = vanilla_linear_attention(q, k, v, kernel=focused_kernel(p, eps),
                                    order="linear", eps=eps)
    return ops.add(attn, ops.depthwise_conv1d(v, dwc_kernel))


def _multi_head(x: Tensor, params: FlaParams, kind: str) -> Tensor:
    if x.ndim != 2 or x.shape[1] != params.d:
        raise ShapeError(f"input width {x.shape} does not match params width {params.d}")
    d, h = params.d, params.h
    dh = d // h
    q = ops.matmul(x, params.Wq)
    k = ops.matmul(x, params.Wk)
    v = ops.matmul(x, params.Wv)
    heads = []
    for i in range(h):
        lo, hi = i * dh, (i + 1) * dh
        qh = ops.slice_cols(q, lo, hi)
        kh = ops.slice_cols(k, lo, hi)
        vh = ops.slice_cols(v, lo, hi)
        if kind == "fla":
            kern = ops.narrow0(params.dwc_kernel, lo, dh)
            heads.append(focused_linear_attention(qh, kh, vh, params.p, kern))
        elif kind == "vla":
            heads.append(vanilla_linear_attention(qh, kh, vh, kernel=relu_kernel,
                                                  order="linear"))
        else:
            raise ConfigError(f"unknown attention kind {kind!r}")
    return ops.matmul(ops.concat_cols(heads), params.Wo)


def multi_head_fla(x: Tensor, params: FlaParams) -> Tensor:
    """Project to Q/K/V, run focused linear attention per contiguous
    channel-block head (each head owns its slice of the conv kernel),
    concatenate, and project out."""
    return _multi_head(x, params, "fla")


def gated_fla(x: Tensor, params: FlaParams, gated: bool = True,
              kind: str = "fla") -> Tensor:
    """Pre-norm attention block with a multiplicative SiLU gate.

    One layer norm feeds both branches: the gate G = silu(norm(x) Wg)
    and the multi-head attention output; the block returns
    x + G * attention (or x + attention with the gate ablated).
    """
    z = ops.layer_norm(x, params.norm_gain, params.norm_bias)
    attn = _multi_head(z, params, kind)
    if not gated:
        return ops.add(x, attn)
    gate = ops.silu(ops.matmul(z, params.Wg))
    return ops.add(x, ops.mul(gate, attn))
