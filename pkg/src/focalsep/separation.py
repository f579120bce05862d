"""Toy two-speaker time-domain separator built on gated attention blocks.

Pipeline: strided framing encoder (linear basis + ReLU), a stack of gated
attention blocks over the latent sequence, a split projection producing
two sigmoid masks on the encoder latent, and per-speaker linear decoders
reassembled by overlap-add. Training is permutation-invariant SI-SNR on
deterministic synthetic mixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .attention import FlaParams, gated_fla
from .errors import (ConfigError, NumericError, ShapeError,
                     TrainingDivergedError, UndefinedReferenceError)
from .tape import Tape, backward
from .tensor import Tensor

SPEAKERS = 2
SI_SNR_CAP_DB = 60.0
_LN10 = math.log(10.0)


@dataclass
class SepNetConfig:
    """Sizing of the toy separator."""

    enc_kernel: int = 16
    enc_stride: int = 8
    channels: int = 32
    blocks: int = 4
    heads: int = 4
    p: float = 3.0
    dwc_k: int = 7
    gated: bool = True
    sample_rate: int = 8000

    def __post_init__(self):
        if self.enc_stride > self.enc_kernel:
            raise ConfigError(
                f"stride {self.enc_stride} must not exceed frame size {self.enc_kernel}")
        if self.enc_stride < 1 or self.enc_kernel < 1:
            raise ConfigError("frame size and stride must be positive")
        if self.channels < 1 or self.channels % self.heads != 0:
            raise ConfigError(
                f"channels {self.channels} not divisible by heads {self.heads}")
        if self.blocks < 1:
            raise ConfigError(f"need at least one block, got {self.blocks}")


def tiny_config() -> SepNetConfig:
    """Smallest config that exercises every part; used for gradient checks."""
    return SepNetConfig(enc_kernel=16, enc_stride=8, channels=8, blocks=1,
                        heads=2, p=3.0, dwc_k=7)


@dataclass
class SepNet:
    """Parameter container for the separator."""

    cfg: SepNetConfig
    encoder: Tensor            # enc_kernel x channels
    blocks: list[FlaParams]
    split: Tensor              # channels x 2*channels
    decoders: tuple[Tensor, Tensor]   # channels x enc_kernel each

    @classmethod
    def init(cls, cfg: SepNetConfig, seed: int = 0) -> "SepNet":
        rng = np.random.default_rng(seed)
        k, d = cfg.enc_kernel, cfg.channels
        enc = Tensor._wrap(rng.standard_normal((k, d)) / np.sqrt(k))
        blocks = [FlaParams.init(d, cfg.heads, cfg.p, cfg.dwc_k, rng)
                  for _ in range(cfg.blocks)]
        split = Tensor._wrap(rng.standard_normal((d, 2 * d)) / np.sqrt(d))
        dec0 = Tensor._wrap(rng.standard_normal((d, k)) / np.sqrt(d))
        dec1 = Tensor._wrap(rng.standard_normal((d, k)) / np.sqrt(d))
        return cls(cfg=cfg, encoder=enc, blocks=blocks, split=split,
                   decoders=(dec0, dec1))

    def parameters(self) -> list[tuple[str, Tensor]]:
        named = [("encoder", self.encoder), ("split", self.split),
                 ("dec0", self.decoders[0]), ("dec1", self.decoders[1])]
        for i, blk in enumerate(self.blocks):
            named.extend((f"block{i}.{n}", t) for n, t in blk.named_tensors())
        return named

    def to_flat(self) -> Tensor:
        """All parameters raveled into one vector, in parameters() order."""
        return Tensor._wrap(np.concatenate(
            [t.data.ravel() for _, t in self.parameters()]))


def net_from_flat(cfg: SepNetConfig, flat: Tensor) -> SepNet:
    """Rebuild a net whose parameters are slices of one flat vector.

    The slices are differentiable ops, so a scalar loss of the rebuilt
    net back-propagates into the flat vector; this is what lets the
    whole model be gradient-checked as a single function of one input.
    """
    template = SepNet.init(cfg, seed=0)
    shapes = [(name, t.shape) for name, t in template.parameters()]
    total = sum(int(np.prod(s)) for _, s in shapes)
    if flat.shape != (total,):
        raise ShapeError(f"flat vector has shape {flat.shape}, expected ({total},)")
    parts = {}
    at = 0
    for name, shape in shapes:
        n = int(np.prod(shape))
        parts[name] = ops.reshape(ops.narrow0(flat, at, n), shape)
        at += n
    blocks = []
    for i in range(cfg.blocks):
        blocks.append(FlaParams(
            Wq=parts[f"block{i}.Wq"], Wk=parts[f"block{i}.Wk"],
            Wv=parts[f"block{i}.Wv"], Wo=parts[f"block{i}.Wo"],
            dwc_kernel=parts[f"block{i}.dwc_kernel"], Wg=parts[f"block{i}.Wg"],
            norm_gain=parts[f"block{i}.norm_gain"],
            norm_bias=parts[f"block{i}.norm_bias"],
            p=cfg.p, k=cfg.dwc_k, h=cfg.heads))
    return SepNet(cfg=cfg, encoder=parts["encoder"], blocks=blocks,
                  split=parts["split"],
                  decoders=(parts["dec0"], parts["dec1"]))


def encode(wave: Tensor, net: SepNet) -> Tensor:
    """Strided frames times the encoder basis, rectified."""
    frames = ops.frame_signal(wave, net.cfg.enc_kernel, net.cfg.enc_stride)
    return ops.relu(ops.matmul(frames, net.encoder))


def separate(mixture: Tensor, net: SepNet) -> tuple[Tensor, Tensor]:
    """Split a mixture waveform into two estimated source waveforms."""
    if mixture.ndim != 1:
        raise ShapeError(f"mixture must be 1-d, got shape {mixture.shape}")
    cfg = net.cfg
    length = mixture.shape[0]
    latent = encode(mixture, net)
    x = latent
    for blk in net.blocks:
        x = gated_fla(x, blk, gated=cfg.gated)
    logits = ops.matmul(x, net.split)
    d = cfg.channels
    outs = []
    for spk in range(SPEAKERS):
        mask = ops.sigmoid(ops.slice_cols(logits, spk * d, (spk + 1) * d))
        frames = ops.matmul(ops.mul(mask, latent), net.decoders[spk])
        outs.append(ops.overlap_add(frames, cfg.enc_stride, length))
    return outs[0], outs[1]


def si_snr(est: Tensor, ref: Tensor, cap: float = SI_SNR_CAP_DB) -> Tensor:
    """Scale-invariant SNR in dB, capped, as a 0-d tensor.

    Both signals are zero-meaned, the estimate is projected onto the
    reference, and the energy ratio of projection to residual is taken
    in dB. A reference with no energy after zero-meaning is rejected.
    An estimate exactly orthogonal to the reference has a zero-energy
    projection; the log then surfaces as NumericError.
    """
    if est.ndim != 1 or est.shape != ref.shape:
        raise ShapeError(f"est/ref shapes disagree: {est.shape} vs {ref.shape}")
    if not np.any(ref.data - ref.data.mean()):
        raise UndefinedReferenceError("reference signal has no energy")
    est_zm = ops.sub(est, ops.mean_all(est))
    ref_zm = ops.sub(ref, ops.mean_all(ref))
    dot = ops.sum_all(ops.mul(est_zm, ref_zm))
    ref_energy = ops.sum_all(ops.mul(ref_zm, ref_zm))
    target = ops.mul(ref_zm, ops.div(dot, ref_energy))
    residual = ops.sub(est_zm, target)
    num = ops.sum_all(ops.mul(target, target))
    den = ops.add(ops.sum_all(ops.mul(residual, residual)), 1e-12)
    val = ops.mul(ops.log(ops.div(num, den)), 10.0 / _LN10)
    return ops.minimum_scalar(val, cap)


def pit_loss(ests: tuple[Tensor, Tensor],
             refs: tuple[Tensor, Tensor]) -> tuple[Tensor, tuple[int, int]]:
    """Permutation-invariant loss: minus the best mean pairwise SI-SNR.

    Returns the loss node and the winning assignment (ref index for each
    estimate). Gradients flow only through the selected permutation.
    """
    s = [[si_snr(est, ref) for ref in refs] for est in ests]
    straight = ops.mul(ops.add(s[0][0], s[1][1]), 0.5)
    swapped = ops.mul(ops.add(s[0][1], s[1][0]), 0.5)
    if straight.item() >= swapped.item():
        return ops.neg(straight), (0, 1)
    return ops.neg(swapped), (1, 0)


@dataclass
class MixtureSample:
    """One synthetic training item; mixture is exactly the sum of sources."""

    mixture: Tensor
    sources: tuple[Tensor, Tensor]
    seed: int


def synth_mixture(seed: int, length: int = 8000,
                  sample_rate: int = 8000) -> MixtureSample:
    """Deterministic two-source toy mixture.

    Source 1: three sinusoids with frequencies drawn in [80, 400] Hz and
    random phases. Source 2: moving-average-filtered white noise with a
    sinusoidal amplitude envelope at a rate drawn in [2, 8] Hz. Both are
    peak-normalized to 0.7; the mixture is their exact float sum.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64) / sample_rate

    freqs = rng.uniform(80.0, 400.0, 3)
    phases = rng.uniform(0.0, 2.0 * np.pi, 3)
    s1 = np.zeros(length, dtype=np.float64)
    for f, ph in zip(freqs, phases):
        s1 += np.sin(2.0 * np.pi * f * t + ph)
    s1 *= 0.7 / np.max(np.abs(s1))

    white = rng.standard_normal(length)
    smooth = np.convolve(white, np.ones(8) / 8.0, mode="same")
    rate = rng.uniform(2.0, 8.0)
    mod_phase = rng.uniform(0.0, 2.0 * np.pi)
    envelope = 0.5 * (1.0 + np.sin(2.0 * np.pi * rate * t + mod_phase))
    s2 = smooth * envelope
    s2 *= 0.7 / np.max(np.abs(s2))

    mix = s1 + s2
    return MixtureSample(mixture=Tensor._wrap(mix),
                         sources=(Tensor._wrap(s1), Tensor._wrap(s2)),
                         seed=seed)


def train_toy(cfg: SepNetConfig, dataset: list[MixtureSample], steps: int,
              lr: float, net: SepNet | None = None, seed: int = 0,
              weight_decay: float = 0.01, clip_norm: float = 5.0,
              ) -> tuple[SepNet, list[float]]:
    """Full-batch gradient descent on the mean PIT loss over the dataset.

    Decoupled weight decay and the gradient step both scale with lr, so
    lr=0 leaves the net untouched. The global gradient norm is clipped at
    clip_norm. Any non-finite value during a step raises
    TrainingDivergedError naming the step. Returns the net and the
    per-step loss history (loss measured before each update).
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if not dataset:
        raise ConfigError("dataset is empty")
    if net is None:
        net = SepNet.init(cfg, seed=seed)
    params = net.parameters()
    history: list[float] = []
    for step in range(steps):
        try:
            with Tape() as tape:
                for name, p in params:
                    tape.watch(p, name)
                total = None
                for item in dataset:
                    ests = separate(item.mixture, net)
                    item_loss, _ = pit_loss(ests, item.sources)
                    total = item_loss if total is None else ops.add(total, item_loss)
                loss = ops.mul(total, 1.0 / len(dataset))
            grads = backward(tape, loss)
            history.append(loss.item())
            sq = 0.0
            for name, _ in params:
                g = grads[name].data
                sq += float(np.dot(g.ravel(), g.ravel()))
            gnorm = math.sqrt(sq)
            scale = 1.0 if gnorm <= clip_norm else clip_norm / gnorm
            for name, p in params:
                p.assign_(p.data - lr * (scale * grads[name].data
                                         + weight_decay * p.data))
        except NumericError as exc:
            raise TrainingDivergedError(step) from exc
    return net, history
