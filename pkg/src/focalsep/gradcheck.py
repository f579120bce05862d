"""Finite-difference validation of recorded gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tape import Tape, backward, stop_recording
from .tensor import Tensor


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between recorded and central-difference gradients.

    ``f`` must map a tensor to a scalar tensor using library ops only.
    The error at each coordinate is |analytic - central| divided by
    max(|analytic|, |central|, 1e-8); the max over coordinates is returned.
    Non-finite values at a probe point surface as NumericError from the
    tensor layer.
    """
    with Tape() as tape:
        tape.watch(x, "x")
        loss = f(x)
    analytic = backward(tape, loss)["x"].data

    numeric = np.zeros(x.size, dtype=np.float64)
    flat = x.data.ravel()
    with stop_recording():
        for i in range(flat.size):
            plus = flat.copy()
            plus[i] += h
            minus = flat.copy()
            minus[i] -= h
            fp = f(Tensor._wrap(plus.reshape(x.shape))).item()
            fm = f(Tensor._wrap(minus.reshape(x.shape))).item()
            numeric[i] = (fp - fm) / (2.0 * h)
    numeric = numeric.reshape(x.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
