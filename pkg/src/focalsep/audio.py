"""Raw audio exchange: headerless 32-bit little-endian float PCM, mono.

The nominal sample rate is 8000 Hz; the format carries no header, so the
rate is a documentation-level contract, not a file property.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def read_f32(path: str) -> Tensor:
    raw = np.fromfile(path, dtype="<f4")
    return Tensor._wrap(raw.astype(np.float64))


def write_f32(path: str, wave: Tensor):
    wave.data.astype("<f4").tofile(path)
