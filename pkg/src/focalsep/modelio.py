"""Versioned flat binary serialization for separator models.

Layout, all little-endian: an 8-byte magic/version string; a fixed
config block (five u32 sizing fields, f64 focus factor, u32 conv size,
u8 gate flag, u32 sample rate); a u32 parameter count; then each
parameter as u32 name length, utf-8 name, u32 rank, u32 dims, and the
raw float64 buffer.
"""

from __future__ import annotations

import struct

import numpy as np

from .separation import SepNet, SepNetConfig
from .tensor import Tensor

MAGIC = b"FSEPNET1"
_CFG = struct.Struct("<5IdIBI")


def save_model(path: str, net: SepNet):
    cfg = net.cfg
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_CFG.pack(cfg.enc_kernel, cfg.enc_stride, cfg.channels,
                           cfg.blocks, cfg.heads, cfg.p, cfg.dwc_k,
                           1 if cfg.gated else 0, cfg.sample_rate))
        params = net.parameters()
        fh.write(struct.pack("<I", len(params)))
        for name, tensor in params:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.data.astype("<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError("model file is truncated")
    return buf


def load_model(path: str) -> SepNet:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a model file (bad magic)")
        ek, es, ch, blocks, heads, p, dk, gated, sr = _CFG.unpack(
            _read_exact(fh, _CFG.size))
        cfg = SepNetConfig(enc_kernel=ek, enc_stride=es, channels=ch,
                           blocks=blocks, heads=heads, p=p, dwc_k=dk,
                           gated=bool(gated), sample_rate=sr)
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        loaded: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(_read_exact(fh, 8 * size), dtype="<f8")
            loaded[name] = arr.reshape(dims).astype(np.float64)
        if fh.read(1):
            raise ValueError("model file has trailing bytes")

    net = SepNet.init(cfg, seed=0)
    expected = net.parameters()
    names = {name for name, _ in expected}
    if set(loaded) != names:
        raise ValueError("model parameter names do not match the config")
    for name, tensor in expected:
        if loaded[name].shape != tensor.shape:
            raise ValueError(
                f"parameter {name} has shape {loaded[name].shape}, "
                f"expected {tensor.shape}")
        tensor.assign_(loaded[name])
    return net
