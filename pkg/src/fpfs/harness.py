"""Dataset generation, correctness verification, false-positive
measurement and lookup benchmarks.

Synthetic keys are 16-character hex tokens minted by a bijective mix of
a counter, so a generated collection never contains duplicates and S/T
splits are disjoint by construction.  All measurements are vectorized;
timings are wall-clock per-lookup means against an in-repo plain filter
baseline, since absolute nanoseconds are platform-bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .filters import BuildConfig, FpfsFilter, build_filter, build_plain
from .hashing import GOLDEN, MASK64, mix64_array
from .keys import KeyBatch, KeySource, StreamedKeys, iter_chunks

WILSON_Z = 1.959963984540054  # two-sided 95%

CSV_HEADER = (
    "variant,r,a,c,s,t,f,bits,bits_per_elem,pred_fpp,"
    "meas_fpp,ci_lo,ci_hi,build_ns,pos_ns,neg_ns"
)

TOKEN_BYTES = 16
_DEFAULT_CHUNK = 1 << 20


def _token_values(rng_seed: int, start: int, count: int) -> np.ndarray:
    base = np.uint64((rng_seed * GOLDEN) & MASK64)
    return mix64_array(np.arange(start, start + count, dtype=np.uint64) + base)

def _values_to_tokens(vals: np.ndarray) -> np.ndarray:
    raw = vals.astype(">u8").tobytes().hex().encode()
    return np.frombuffer(raw, dtype=f"S{TOKEN_BYTES}")


def token_batch(rng_seed: int, start: int, count: int) -> KeyBatch:
    """Deterministic batch of distinct hex tokens (a bijection of the
    counter range, so no duplicates within one rng_seed)."""
    return KeyBatch.from_tokens(_values_to_tokens(_token_values(rng_seed, start, count)))


def gen_disjoint_sets(s: int, t: int, rng_seed: int) -> tuple[KeyBatch, KeyBatch]:
    """(S, T) with |S| = s, |T| = t, disjoint, deterministic in rng_seed."""
    return token_batch(rng_seed, 0, s), token_batch(rng_seed, s, t)


def gen_disjoint_stream(
    s: int, t: int, rng_seed: int, chunk: int = _DEFAULT_CHUNK
) -> tuple[KeyBatch, StreamedKeys]:
    """Like gen_disjoint_sets but T is visited in chunks and never
    materialized whole; re-iterable for multi-pass builds."""

    def chunks() -> Iterator[KeyBatch]:
        for lo in range(s, s + t, chunk):
            yield token_batch(rng_seed, lo, min(chunk, s + t - lo))

    return token_batch(rng_seed, 0, s), StreamedKeys(t, chunks)


def _key_view(batch: KeyBatch) -> np.ndarray:
    return batch.mat.view(f"S{batch.mat.shape[1]}").ravel()


def verify(filt: FpfsFilter, S: KeyBatch, T: KeySource) -> tuple[list[bytes], list[bytes]]:
    """Exhaustively query both sets; returns (false_negatives, t_positives)."""
    fn_idx = np.flatnonzero(~filt.query_batch(S))
    false_negatives = [S.key(int(i)) for i in fn_idx]
    t_positives: list[bytes] = []
    for chunk in iter_chunks(T):
        tp_idx = np.flatnonzero(filt.query_batch(chunk))
        t_positives.extend(chunk.key(int(i)) for i in tp_idx)
    return false_negatives, t_positives


def wilson_interval(positives: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    phat = positives / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def measure_fpp(
    filt: FpfsFilter,
    n_queries: int,
    rng_seed: int,
    exclude: KeySource | None = None,
) -> tuple[float, tuple[float, float]]:
    """Positive fraction over fresh random keys, with 95% Wilson CI.

    Probes that happen to fall in the exclude set (normally S | T) are
    membership-tested and skipped, not waved off probabilistically.
    """
    if n_queries < 10**5:
        raise ValueError("need at least 1e5 queries for a stable estimate")
    exclude_keys: np.ndarray | None = None
    if exclude is not None:
        views = [_key_view(c) for c in iter_chunks(exclude)]
        if views:
            exclude_keys = np.concatenate(views)
    positives = 0
    kept = 0
    done = 0
    chunk = min(n_queries, _DEFAULT_CHUNK)
    while done < n_queries:
        m = min(chunk, n_queries - done)
        probes = token_batch(rng_seed + 1, done, m)
        keep = np.ones(m, bool)
        if exclude_keys is not None:
            keep = ~np.isin(_key_view(probes), exclude_keys)
        hits = filt.query_batch(probes)
        positives += int((hits & keep).sum())
        kept += int(keep.sum())
        done += m
    fraction = positives / kept if kept else 0.0
    return fraction, wilson_interval(positives, kept)


@dataclass
class EvalReport:
    """One experiment cell: correctness counts, size, FPP and timings."""

    variant: str
    r: int
    a: int
    c: int
    s: int
    t: int
    f: int
    memory_bits: int
    predicted_fpp: float
    measured_fpp: float
    ci_lo: float
    ci_hi: float
    false_negative_count: int
    t_positive_count: int
    build_ns: float
    pos_lookup_ns: float
    neg_lookup_ns: float
    runs: int
    build_ratio_vs_plain: float = float("nan")
    pos_ratio_vs_plain: float = float("nan")
    neg_ratio_vs_plain: float = float("nan")

    def csv_row(self) -> str:
        return ",".join(
            [
                self.variant,
                str(self.r),
                str(self.a),
                str(self.c),
                str(self.s),
                str(self.t),
                str(self.f),
                str(self.memory_bits),
                f"{self.memory_bits / self.s:.4f}" if self.s else "nan",
                f"{self.predicted_fpp:.6g}",
                f"{self.measured_fpp:.6g}",
                f"{self.ci_lo:.6g}",
                f"{self.ci_hi:.6g}",
                f"{self.build_ns:.0f}",
                f"{self.pos_lookup_ns:.2f}",
                f"{self.neg_lookup_ns:.2f}",
            ]
        )


def _time_batch_queries(filt: FpfsFilter, batch: KeyBatch, runs: int) -> float:
    """Mean nanoseconds per lookup over whole-batch query passes."""
    filt.query_batch(batch)  # warm
    best: list[float] = []
    for _ in range(runs):
        t0 = time.perf_counter_ns()
        filt.query_batch(batch)
        best.append(time.perf_counter_ns() - t0)
    return float(np.mean(best)) / max(1, len(batch))


def bench(
    cfg: BuildConfig,
    S: KeyBatch,
    T: KeySource,
    runs: int = 30,
    rng_seed: int = 7,
    fpp_queries: int = 10**6,
    neg_queries: int = 10**6,
) -> EvalReport:
    """Build, verify, measure FPP and time lookups for one configuration.

    Lookup times are reported both absolute and relative to a plain
    filter built on the same S at the same r.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")

    build_times = []
    filt = None
    for _ in range(runs):
        t0 = time.perf_counter_ns()
        filt = build_filter(S, T, cfg)
        build_times.append(time.perf_counter_ns() - t0)
    plain_times = []
    plain = None
    for _ in range(runs):
        t0 = time.perf_counter_ns()
        plain = build_plain(S, cfg)
        plain_times.append(time.perf_counter_ns() - t0)

    fn, tp = verify(filt, S, T)
    fpp, (lo, hi) = measure_fpp(
        filt, fpp_queries, rng_seed, exclude=KeyBatch.concat([S] + list(iter_chunks(T)))
    )

    neg_probes = token_batch(rng_seed + 13, 0, neg_queries)
    pos_ns = _time_batch_queries(filt, S, runs) if len(S) else float("nan")
    neg_ns = _time_batch_queries(filt, neg_probes, runs)
    plain_pos_ns = _time_batch_queries(plain, S, runs) if len(S) else float("nan")
    plain_neg_ns = _time_batch_queries(plain, neg_probes, runs)

    return EvalReport(
        variant=cfg.variant,
        r=filt.r,
        a=filt.a,
        c=filt.c,
        s=filt.s,
        t=filt.t,
        f=filt.f,
        memory_bits=filt.memory_bits,
        predicted_fpp=filt.predicted_fpp,
        measured_fpp=fpp,
        ci_lo=lo,
        ci_hi=hi,
        false_negative_count=len(fn),
        t_positive_count=len(tp),
        build_ns=float(np.mean(build_times)),
        pos_lookup_ns=pos_ns,
        neg_lookup_ns=neg_ns,
        runs=runs,
        build_ratio_vs_plain=float(np.mean(build_times)) / float(np.mean(plain_times)),
        pos_ratio_vs_plain=pos_ns / plain_pos_ns,
        neg_ratio_vs_plain=neg_ns / plain_neg_ns,
    )
