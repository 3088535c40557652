"""Forward-pass throughput, length-scaling fits and context-capacity probing."""

from __future__ import annotations

import csv
import statistics
import time
import tracemalloc
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .encoder import ContextOverflowError, EncoderWeights, encode
from .tokenizer import N_RESERVED, TokenSequence
from .window import WindowingConfig, make_windows

BENCH_COLUMNS = ["encoder", "T", "reps", "median_s", "tok_per_s", "beta", "windows"]


class TimerResolutionError(RuntimeError):
    pass


@dataclass
class ThroughputReport:
    kind: str
    T: int
    reps: int
    warmup: int
    times: list[float]
    tokens_per_rep: int  # real tokens encoded per rep, window overlap included
    windows: int

    @property
    def median_s(self) -> float:
        return statistics.median(self.times)

    @property
    def tokens_per_sec(self) -> float:
        return self.tokens_per_rep / self.median_s


@dataclass
class ScalingReport:
    kind: str
    lengths: list[int]
    times: list[float]
    beta: float
    points: list[ThroughputReport] = field(default_factory=list)


def bench_tokens(T: int, vocab_size: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(N_RESERVED, vocab_size, size=T)


def _windows_for(weights: EncoderWeights, ids: np.ndarray, overlap: float):
    cfg = weights.config
    if cfg.kind == "attention" and len(ids) > cfg.max_context:
        ws = make_windows(TokenSequence("bench", ids), WindowingConfig(cfg.max_context, overlap))
        return ws.padded_ids, ws.masks
    return ids[None, :], np.ones((1, len(ids)), dtype=bool)


def measure_throughput(
    weights: EncoderWeights, T: int, reps: int = 3, warmup: int = 1, *, overlap: float = 0.2, seed: int = 0
) -> ThroughputReport:
    """Median wall time of a single-threaded forward pass over ``T`` seeded random tokens.

    Attention inputs longer than the context cap are split into overlapping windows and
    every window's real tokens are counted.
    """
    if reps < 3 or warmup < 1:
        raise ValueError("need reps >= 3 and warmup >= 1")
    ids = bench_tokens(T, weights.config.vocab_size, seed)
    padded, masks = _windows_for(weights, ids, overlap)
    times = []
    with threadpool_limits(limits=1):
        for i in range(warmup + reps):
            t0 = time.perf_counter()
            for w_ids, w_mask in zip(padded, masks):
                encode(w_ids, w_mask, weights)
            dt = time.perf_counter() - t0
            if i >= warmup:
                times.append(dt)
    report = ThroughputReport(weights.config.kind, T, reps, warmup, times, int(masks.sum()), len(padded))
    resolution = time.get_clock_info("perf_counter").resolution
    if resolution > 0.01 * report.median_s:
        raise TimerResolutionError(
            f"timer resolution {resolution:g}s is coarser than 1% of the measured {report.median_s:g}s; increase T or reps"
        )
    return report


def fit_exponent(lengths: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(length)."""
    x = np.log(np.asarray(lengths, dtype=np.float64))
    y = np.log(np.asarray(times, dtype=np.float64))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def check_lengths(lengths: Sequence[int]) -> None:
    if len(lengths) < 4:
        raise ValueError("need at least 4 lengths")
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be strictly increasing")
    if lengths[-1] < 8 * lengths[0]:
        raise ValueError("lengths must span at least an 8x range")


def fit_scaling_exponent(
    weights: EncoderWeights, lengths: Sequence[int], reps: int = 3, warmup: int = 1, *, seed: int = 0
) -> ScalingReport:
    lengths = [int(t) for t in lengths]
    check_lengths(lengths)
    points = [measure_throughput(weights, T, reps, warmup, seed=seed) for T in lengths]
    times = [p.median_s for p in points]
    if any(b < a for a, b in zip(times, times[1:])):
        warnings.warn(f"non-monotone timings for {weights.config.kind}: {times}", RuntimeWarning, stacklevel=2)
    return ScalingReport(weights.config.kind, lengths, times, fit_exponent(lengths, times), points)


def write_bench_csv(rows: Sequence[tuple[str, ThroughputReport, float | None]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for name, rep, beta in rows:
            w.writerow(
                [name, rep.T, rep.reps, f"{rep.median_s:.6f}", f"{rep.tokens_per_sec:.1f}", "" if beta is None else f"{beta:.4f}", rep.windows]
            )


# --- context capacity --------------------------------------------------------


@dataclass
class CapacityResult:
    kind: str
    max_tokens: int
    hit_cap: bool  # True when the attention context cap bound before the memory budget
    peak_bytes: int


def peak_encode_bytes(weights: EncoderWeights, T: int, seed: int = 0) -> int:
    """Peak traced allocation while encoding one ``T``-token window."""
    ids = bench_tokens(T, weights.config.vocab_size, seed)
    mask = np.ones(T, dtype=bool)
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base = tracemalloc.get_traced_memory()[0]
    try:
        encode(ids, mask, weights)
        peak = tracemalloc.get_traced_memory()[1]
    finally:
        if not was_tracing:
            tracemalloc.stop()
    return peak - base


def _score_matrix_bytes(T: int) -> int:
    return 8 * T * T


def compare_context_capacity(
    weights_list: Sequence[EncoderWeights], budget_bytes: int, t_max: int, *, seed: int = 0
) -> list[CapacityResult]:
    """Largest single-window length each encoder can process within ``budget_bytes``.

    The search is capped at ``t_max``. Attention lengths whose one (T, T) score matrix
    already exceeds the budget are rejected without being run.
    """
    out = []
    for weights in weights_list:
        cfg = weights.config
        hi = t_max
        capped = False
        if cfg.kind == "attention" and cfg.max_context <= t_max:
            hi, capped = cfg.max_context, True

        def feasible(T: int) -> tuple[bool, int]:
            if cfg.kind == "attention" and _score_matrix_bytes(T) > budget_bytes:
                return False, _score_matrix_bytes(T)
            try:
                peak = peak_encode_bytes(weights, T, seed)
            except (MemoryError, ContextOverflowError):
                return False, 0
            return peak <= budget_bytes, peak

        ok, peak = feasible(hi)
        if ok:
            out.append(CapacityResult(cfg.kind, hi, capped, peak))
            continue
        ok1, peak1 = feasible(1)
        if not ok1:
            raise ValueError(f"budget of {budget_bytes} bytes is below the minimal footprint of {cfg.kind}")
        lo, best_peak = 1, peak1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            ok, peak = feasible(mid)
            if ok:
                lo, best_peak = mid, peak
            else:
                hi = mid
        out.append(CapacityResult(cfg.kind, lo, False, best_peak))
    return out
