"""Forward-pass scaling benchmark across attention modes.

Measures median wall-clock time and peak live tensor elements for one
forward pass per (mode, sequence length) cell, then fits a log-log line
per mode whose slope is the empirical scaling exponent. "Memory" here is
the tensor layer's live-element high-water mark: portable, deterministic,
and it directly exposes the N x N intermediate that separates quadratic
from linear attention.

Cells whose predicted footprint exceeds the memory budget (by default
75% of currently available RAM) are recorded as failure rows with nan
measurements rather than risking the process; a MemoryError during a
run is recorded the same way.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass

import numpy as np
import psutil

from . import ops
from .attention import FlaParams, gated_fla, softmax_attention
from .errors import ConfigError, ContractError
from .tensor import Tensor, peak_elements, reset_peak_elements

MODE_CODES = {"softmax": 0, "vla": 1, "fla": 2}
DEFAULT_LENS = [1024 * 2 ** i for i in range(7)]
DEFAULT_MODES = ["softmax", "vla", "fla"]
CSV_HEADER = "mode,N,d,heads,reps,median_seconds,peak_elements"


@dataclass
class BenchRecord:
    mode: str
    N: int
    d: int
    heads: int
    reps: int
    median_seconds: float
    peak_elements: float

    @property
    def ok(self) -> bool:
        return math.isfinite(self.median_seconds) and math.isfinite(self.peak_elements)


@dataclass
class SlopeFit:
    exponent: float
    intercept: float
    r2: float


@dataclass
class BenchConfig:
    modes: list[str]
    lens: list[int]
    d: int = 32
    heads: int = 4
    reps: int = 10
    seed: int = 7
    mem_limit_gb: float | None = None


def _make_case(mode: str, n: int, d: int, h: int, seed: int) -> tuple[Tensor, FlaParams]:
    rng = np.random.default_rng([seed, n, MODE_CODES[mode]])
    x = Tensor._wrap(rng.standard_normal((n, d)))
    params = FlaParams.init(d, h, p=3.0, k=7, rng=rng)
    return x, params


def _forward(mode: str, x: Tensor, params: FlaParams) -> Tensor:
    if mode == "softmax":
        q = ops.matmul(x, params.Wq)
        k = ops.matmul(x, params.Wk)
        v = ops.matmul(x, params.Wv)
        return softmax_attention(q, k, v)
    return gated_fla(x, params, kind=mode)


def predict_elements(mode: str, n: int, d: int) -> int:
    """Upper estimate of the peak live elements for one cell."""
    if mode == "softmax":
        return n * n + 12 * n * d + 1_000_000
    return 40 * n * d + 1_000_000


def default_budget_elements() -> int:
    return int(psutil.virtual_memory().available * 0.75) // 8


def _failure(mode: str, n: int, d: int, h: int, reps: int) -> BenchRecord:
    return BenchRecord(mode, n, d, h, reps, float("nan"), float("nan"))


def time_forward(mode: str, n: int, d: int, h: int, reps: int, seed: int = 7,
                 budget_elements: int | None = None) -> BenchRecord:
    """Median-of-reps timing of one forward pass, plus peak live elements.

    One warmup run is excluded; the element high-water mark is reset
    after warmup so the peak covers exactly the measured work.
    """
    if mode not in MODE_CODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if reps < 3:
        raise ConfigError(f"reps must be >= 3, got {reps}")
    budget = default_budget_elements() if budget_elements is None else budget_elements
    if predict_elements(mode, n, d) > budget:
        return _failure(mode, n, d, h, reps)
    try:
        x, params = _make_case(mode, n, d, h, seed)
        out = _forward(mode, x, params)  # warmup, excluded
        del out
        reset_peak_elements()
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            out = _forward(mode, x, params)
            times.append(time.perf_counter() - t0)
            del out
        peak = peak_elements()
    except MemoryError:
        return _failure(mode, n, d, h, reps)
    return BenchRecord(mode, n, d, h, reps, statistics.median(times), float(peak))


def fit_slope(points: list[tuple[int, float]]) -> SlopeFit:
    """Least-squares line through (log N, log seconds)."""
    if len(points) < 3:
        raise ContractError(f"slope fit needs at least 3 points, got {len(points)}")
    ns = [p[0] for p in points]
    secs = [p[1] for p in points]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ContractError("sequence lengths must be strictly increasing")
    if any(n <= 0 for n in ns) or any(s <= 0 for s in secs):
        raise ContractError("slope fit needs positive lengths and times")
    lx = np.log(np.array(ns, dtype=np.float64))
    ly = np.log(np.array(secs, dtype=np.float64))
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return SlopeFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)))


def run_suite(config: BenchConfig) -> tuple[list[BenchRecord], dict[str, SlopeFit | None], bool]:
    """One record per (mode, N) plus a slope fit per mode.

    Partial failures (over-budget or OOM cells, too few points to fit)
    leave nan rows and a missing fit; the suite keeps going. The suite
    is successful only if every cell ran and every mode was fitted.
    """
    for mode in config.modes:
        if mode not in MODE_CODES:
            raise ConfigError(f"unknown mode {mode!r}")
    if not config.lens or any(n < 1 for n in config.lens):
        raise ConfigError(f"bad length grid {config.lens}")
    budget = None
    if config.mem_limit_gb is not None:
        budget = int(config.mem_limit_gb * 1024 ** 3) // 8
    records = []
    fits: dict[str, SlopeFit | None] = {}
    for mode in config.modes:
        for n in config.lens:
            records.append(time_forward(mode, n, config.d, config.heads,
                                        config.reps, config.seed, budget))
        good = [(r.N, r.median_seconds) for r in records
                if r.mode == mode and r.ok]
        good.sort()
        fits[mode] = fit_slope(good) if len(good) >= 3 else None
    ok = all(r.ok for r in records) and all(f is not None for f in fits.values())
    return records, fits, ok


def to_csv(records: list[BenchRecord], fits: dict[str, SlopeFit | None]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        peak = str(int(r.peak_elements)) if math.isfinite(r.peak_elements) else "nan"
        lines.append(f"{r.mode},{r.N},{r.d},{r.heads},{r.reps},"
                     f"{r.median_seconds:.9e},{peak}")
    for mode, fit in fits.items():
        if fit is None:
            lines.append(f"{mode},SLOPE,nan,nan")
        else:
            lines.append(f"{mode},SLOPE,{fit.exponent:.6f},{fit.r2:.6f}")
    return "\n".join(lines) + "\n"


def read_records(path: str) -> list[BenchRecord]:
    """Record rows of a suite CSV (summary rows are skipped)."""
    records = []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} is not a benchmark CSV")
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) == 4 and parts[1] == "SLOPE":
            continue
        if len(parts) != 7:
            raise ValueError(f"malformed row: {ln}")
        records.append(BenchRecord(parts[0], int(parts[1]), int(parts[2]),
                                   int(parts[3]), int(parts[4]),
                                   float(parts[5]), float(parts[6])))
    return records
