"""Command-line entry points: bench, train-toy, separate, gradcheck."""

from __future__ import annotations

import os

# Pin BLAS to one thread before numpy loads so timed regions are
# single-threaded; only effective when the CLI is the process entry.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import sys

import numpy as np

from . import audio, bench, modelio, ops
from .attention import (FlaParams, focused_feature_map, focused_linear_attention,
                        gated_fla, multi_head_fla, softmax_attention,
                        vanilla_linear_attention)
from .errors import ConfigError, ShortInputError, TrainingDivergedError
from .gradcheck import grad_check
from .separation import (SepNet, net_from_flat, pit_loss, separate, si_snr,
                         synth_mixture, tiny_config, train_toy, SepNetConfig)
from .tensor import Tensor

DEFAULT_TRAIN_LR = 0.2


def _parse_lens(text: str) -> list[int]:
    """Comma list of lengths; '...' fills doubling steps between neighbors."""
    toks = [t.strip() for t in text.split(",")]
    out: list[int] = []
    for i, tok in enumerate(toks):
        if tok == "...":
            if not out or i + 1 >= len(toks) or toks[i + 1] == "...":
                raise ConfigError("'...' needs explicit lengths on both sides")
            target = int(toks[i + 1])
            val = out[-1] * 2
            while val < target:
                out.append(val)
                val *= 2
        else:
            out.append(int(tok))
    return out


def bench_entry(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bench", description="attention scaling benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="measure all (mode, N) cells and write CSV")
    run.add_argument("--modes", default=",".join(bench.DEFAULT_MODES),
                     help="comma list from softmax,vla,fla")
    run.add_argument("--lens", default=",".join(str(n) for n in bench.DEFAULT_LENS),
                     help="comma list of sequence lengths; '...' doubles between")
    run.add_argument("--dim", type=int, default=32)
    run.add_argument("--heads", type=int, default=4)
    run.add_argument("--reps", type=int, default=10)
    run.add_argument("--seed", type=int, default=7)
    run.add_argument("--out", default="results.csv")
    run.add_argument("--mem-limit-gb", type=float, default=None,
                     help="memory budget; default 75%% of available RAM")

    slope = sub.add_parser("slope", help="refit scaling exponents from a CSV")
    slope.add_argument("--in", dest="infile", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        config = bench.BenchConfig(
            modes=[m.strip() for m in args.modes.split(",") if m.strip()],
            lens=_parse_lens(args.lens), d=args.dim, heads=args.heads,
            reps=args.reps, seed=args.seed, mem_limit_gb=args.mem_limit_gb)
        records, fits, ok = bench.run_suite(config)
        text = bench.to_csv(records, fits)
        with open(args.out, "w") as fh:
            fh.write(text)
        for r in records:
            state = "ok" if r.ok else "FAILED"
            print(f"{r.mode:>8} N={r.N:<6} median={r.median_seconds:.6f}s "
                  f"peak={r.peak_elements:.0f} [{state}]")
        for mode, fit in fits.items():
            if fit is None:
                print(f"{mode:>8} slope: not enough points")
            else:
                print(f"{mode:>8} slope: exponent={fit.exponent:.3f} r2={fit.r2:.4f}")
        print(f"wrote {args.out}")
        return 0 if ok else 1

    try:
        records = bench.read_records(args.infile)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    modes = list(dict.fromkeys(r.mode for r in records))
    ok = True
    for mode in modes:
        good = sorted((r.N, r.median_seconds) for r in records
                      if r.mode == mode and r.ok)
        if len(good) < 3:
            print(f"{mode:>8}: not enough valid points to fit")
            ok = False
            continue
        fit = bench.fit_slope(good)
        print(f"{mode:>8}: exponent={fit.exponent:.3f} r2={fit.r2:.4f}")
    return 0 if ok else 1


def train_toy_entry(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="train-toy", description="overfit the toy separator on synthetic mixtures")
    parser.add_argument("--items", type=int, default=4)
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--lr", type=float, default=DEFAULT_TRAIN_LR)
    parser.add_argument("--out", default="model.bin")
    parser.add_argument("--len", type=int, default=8000, dest="length")
    parser.add_argument("--ungated", action="store_true",
                        help="ablate the multiplicative gate")
    parser.add_argument("--log-every", type=int, default=250)
    args = parser.parse_args(argv)

    cfg = SepNetConfig(gated=not args.ungated)
    dataset = [synth_mixture(seed, args.length) for seed in range(args.items)]
    try:
        if args.log_every > 0:
            net = None
            history = []
            done = 0
            while done < args.steps:
                chunk = min(args.log_every, args.steps - done)
                net, part = train_toy(cfg, dataset, chunk, args.lr, net=net)
                history.extend(part)
                done += chunk
                print(f"step {done:>5}: loss {history[-1]:+.3f} dB")
        else:
            net, history = train_toy(cfg, dataset, args.steps, args.lr)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    scores = []
    for item in dataset:
        ests = separate(item.mixture, net)
        _, perm = pit_loss(ests, item.sources)
        for est_i, ref_i in enumerate(perm):
            ref = item.sources[ref_i]
            snr = si_snr(ests[est_i], ref).item()
            base = si_snr(item.mixture, ref).item()
            scores.append(snr - base)
    mean_improvement = sum(scores) / len(scores)
    modelio.save_model(args.out, net)
    print(f"final loss {history[-1]:+.3f} dB over {len(history)} steps")
    print(f"mean SI-SNR improvement on training items: {mean_improvement:.2f} dB")
    print(f"wrote {args.out}")
    return 0


def separate_entry(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="separate", description="split a mixture into two sources")
    parser.add_argument("--model", required=True)
    parser.add_argument("--in", dest="infile", required=True,
                        help="headerless mono float32 LE PCM @ 8 kHz")
    parser.add_argument("--out1", required=True)
    parser.add_argument("--out2", required=True)
    args = parser.parse_args(argv)
    try:
        net = modelio.load_model(args.model)
        mixture = audio.read_f32(args.infile)
        est1, est2 = separate(mixture, net)
    except (ValueError, ShortInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    audio.write_f32(args.out1, est1)
    audio.write_f32(args.out2, est2)
    print(f"wrote {args.out1} and {args.out2} ({est1.shape[0]} samples each)")
    return 0


def _attention_checks(rng: np.random.Generator) -> list[tuple[str, float]]:
    """grad_check every attention-level op against finite differences."""
    n, d = 5, 4
    results = []

    def sq(t: Tensor) -> Tensor:
        return ops.sum_all(ops.mul(t, t))

    x = Tensor._wrap(rng.standard_normal((n, d)))
    results.append(("focused_feature_map",
                    grad_check(lambda t: sq(focused_feature_map(t, 3.0)), x)))

    q, k, v = (Tensor._wrap(rng.standard_normal((n, d))) for _ in range(3))
    results.append(("softmax_attention/q",
                    grad_check(lambda t: sq(softmax_attention(t, k, v)), q)))
    results.append(("softmax_attention/k",
                    grad_check(lambda t: sq(softmax_attention(q, t, v)), k)))
    results.append(("softmax_attention/v",
                    grad_check(lambda t: sq(softmax_attention(q, k, t)), v)))
    # Checked at fully-positive Q rows: a row whose features reduce to a
    # single nonzero entry has a structurally zero gradient there (row
    # normalization cancels the entry), which sits below the noise floor
    # of central differences and would fail the check spuriously.
    q_pos = Tensor._wrap(np.abs(rng.standard_normal((n, d))) + 0.1)
    for order in ("quadratic", "linear"):
        results.append((f"vanilla_linear_attention/{order}",
                        grad_check(lambda t: sq(vanilla_linear_attention(
                            t, k, v, order=order)), q_pos)))
    kern = Tensor._wrap(rng.standard_normal((d, 3)) * 0.3)
    results.append(("focused_linear_attention",
                    grad_check(lambda t: sq(focused_linear_attention(
                        q, k, t, 3.0, kern)), v)))
    params = FlaParams.init(d, h=2, p=3.0, k=3, rng=rng)
    results.append(("multi_head_fla",
                    grad_check(lambda t: sq(multi_head_fla(t, params)), x)))
    results.append(("gated_fla",
                    grad_check(lambda t: sq(gated_fla(t, params)), x)))
    return results


def gradcheck_entry(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gradcheck", description="finite-difference gradient validation")
    parser.add_argument("--config", choices=["tiny"], default="tiny")
    args = parser.parse_args(argv)
    del args

    rng = np.random.default_rng(42)
    ok = True
    for name, err in _attention_checks(rng):
        passed = err < 1e-4
        ok = ok and passed
        print(f"{name:<34} max rel err {err:.3e}  "
              f"{'pass' if passed else 'FAIL'} (< 1e-4)")

    cfg = tiny_config()
    item = synth_mixture(seed=0, length=256)
    flat = SepNet.init(cfg, seed=3).to_flat()

    def full_loss(theta: Tensor) -> Tensor:
        net = net_from_flat(cfg, theta)
        ests = separate(item.mixture, net)
        loss, _ = pit_loss(ests, item.sources)
        return loss

    err = grad_check(full_loss, flat)
    passed = err < 1e-3
    ok = ok and passed
    print(f"{'sepnet/full_loss':<34} max rel err {err:.3e}  "
          f"{'pass' if passed else 'FAIL'} (< 1e-3)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(bench_entry())
