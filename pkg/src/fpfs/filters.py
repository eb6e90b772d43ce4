"""Membership filters with a guaranteed false-positive-free set.

Given disjoint key sets S (members) and T (protected negatives), every
construction here yields a filter where S always queries positive, T
always queries negative, and other keys are false positives with
probability about 2**-(r + a).

naive   one r-bit table over S | T; members store their fingerprint,
        protected keys store fingerprint ^ 1, so they can never match.
tf      an (r+a-1)-bit table over S plus a separate 1-bit table mapping
        S to 1 and the residual set (keys of T matching the first
        table) to 0.  Cheapest in bits; positives pay a second lookup.
if      the two stages fused into one table whose cells concatenate the
        (r+a-1)-bit stage with c one-bit subfilter columns that share
        probe positions, so any query costs 3 cell reads total.  With
        c = 2 each key checks only the subfilter selected by its
        digest, halving the second-stage load.

The extra width a is chosen per construction to balance first-stage
bits against residual storage; see sizing.py for the closed forms and
the memory models these constructions track.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hashing
from .hashing import (
    derive_seed,
    digest,
    fingerprint,
    fingerprint_batch,
    fingerprint_seed,
    positions,
    subfilter_select,
    subfilter_select_batch,
)
from .keys import KeyBatch, KeySource, as_batch, iter_chunks
from .xorfunc import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_RETRIES,
    BuildExhausted,
    PeelFailure,
    XorTable,
    build_with_retries,
    cell_fill,
    peel,
    solve_cells,
    table_size,
)

VARIANTS = ("plain", "naive", "tf", "if")

DEFAULT_MASTER_SEED = 0x5EED_0F_F1CE

# Distinct sub-masters per build so naive/tf/if tables never share seeds.
_ROLE_NAIVE = 10
_ROLE_TF_FIRST = 11
_ROLE_TF_SECOND = 12
_ROLE_IF = 13
_ROLE_PLAIN = 14

_MAX_SIZING_PASSES = 4


class DisjointnessViolation(ValueError):
    """S and T share keys; the overlap is reported, never resolved."""

    def __init__(self, overlap: list[bytes]):
        shown = b", ".join(k[:32] for k in overlap[:10])
        super().__init__(
            f"{len(overlap)} keys appear in both S and T (first: {shown.decode('utf-8', 'replace')})"
        )
        self.overlap = overlap


@dataclass
class BuildConfig:
    """Requested filter shape and build behaviour.

    r is the fingerprint budget in bits (the target false-positive rate
    is 2**-r before any widening); auto_a picks the widening a per
    construction, otherwise the given a is used as-is.  if_c1 forces the
    integrated construction to a single undivided subfilter column.
    """

    r: int
    variant: str = "tf"
    epsilon: float = DEFAULT_EPSILON
    master_seed: int = DEFAULT_MASTER_SEED
    max_retries: int = DEFAULT_MAX_RETRIES
    auto_a: bool = True
    a: int = 0
    if_c1: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 2 <= self.r <= 24:
            raise ValueError(f"r must be in 2..24, got {self.r}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must be in [0, 1)")
        if self.a < 0:
            raise ValueError("a must be >= 0")


@dataclass
class ResidualSet:
    """Keys of T that match the first stage and must be stored as 0."""

    keys: KeyBatch
    f: int


@dataclass
class FpfsFilter:
    """A built filter: query(x) is True for S, False for T, rare elsewhere.

    table is the primary xor table (the only one except for tf, where
    table2 is the 1-bit second stage).  For the integrated variant the
    table's cells concatenate the (r+a-1)-bit stage in the low bits with
    c subfilter bits above it.
    """

    variant: str
    r: int
    a: int
    c: int
    epsilon: float
    table: XorTable
    table2: XorTable | None
    s: int
    t: int
    f: int

    @property
    def first_stage_width(self) -> int:
        if self.variant == "if":
            return self.table.cell_width - self.c
        return self.table.cell_width

    @property
    def memory_bits(self) -> int:
        bits = self.table.total_bits
        if self.table2 is not None:
            bits += self.table2.total_bits
        return bits

    @property
    def predicted_fpp(self) -> float:
        if self.variant in ("plain", "naive"):
            return 2.0 ** -self.r
        return 2.0 ** -(self.r + self.a)

    @property
    def retry_counts(self) -> list[int]:
        out = [self.table.retries]
        if self.table2 is not None:
            out.append(self.table2.retries)
        return out

    def query(self, key: bytes) -> bool:
        """Single-key membership query (cell reads go via get_cell)."""
        w1 = self.first_stage_width
        d = digest(key, self.table.seed)
        p0, p1, p2 = positions(d, self.table.segment_len)
        x = self.table.get_cell(p0) ^ self.table.get_cell(p1) ^ self.table.get_cell(p2)
        v = fingerprint(digest(key, fingerprint_seed(self.table.seed)), w1)
        if self.variant in ("plain", "naive"):
            return x == v
        if self.variant == "tf":
            if x != v:
                return False
            return self.table2.eval_key(key) == 1
        # integrated: same three reads carry the subfilter columns
        if (x & ((1 << w1) - 1)) != v:
            return False
        column = w1 if self.c == 1 else w1 + subfilter_select(d) - 1
        return (x >> column) & 1 == 1

    def query_batch(self, batch: KeyBatch) -> np.ndarray:
        """Vectorized query; returns a bool array aligned with the batch."""
        w1 = self.first_stage_width
        d = batch.digests(self.table.seed)
        x = self.table.eval_digests(d)
        v = fingerprint_batch(batch.digests(fingerprint_seed(self.table.seed)), w1)
        if self.variant in ("plain", "naive"):
            return x == v
        if self.variant == "tf":
            out = x == v
            hits = np.flatnonzero(out)
            if hits.size:
                out[hits] = self.table2.eval_batch(batch.take(hits)) == 1
            return out
        match = (x & np.uint32((1 << w1) - 1)) == v
        if self.c == 1:
            column = np.uint32(w1)
        else:
            column = (w1 - 1 + subfilter_select_batch(d)).astype(np.uint32)
        return match & (((x >> column) & np.uint32(1)) == 1)


def query(filt: FpfsFilter, key: bytes) -> bool:
    return filt.query(key)


def _ceil_div(num: int, den: int) -> int:
    return -(-num // den)


def compute_a_tf(s: int, t: int, r: int) -> int:
    """Widening for the two-table construction.

    Zero while the expected residual t / 2**(r-1) stays within 2*s,
    otherwise the smallest a restoring t / 2**(r+a-1) <= 2*s, which is
    ceil(log2(t / (2**(r-1) * s))) - 1.  Integer arithmetic throughout,
    so the threshold is exact; equality keeps a = 0.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if t < 0 or r < 2:
        raise ValueError("need t >= 0 and r >= 2")
    a = 0
    while t > (s << (r + a)):
        a += 1
    return a


def compute_c_min(s: int, t: int, r: int) -> int:
    """Smallest subfilter count keeping each subfilter's load under s."""
    if s < 1:
        raise ValueError("s must be >= 1")
    return 1 + _ceil_div(t, s << (r - 1))


def select_if_params(s: int, t: int, r: int) -> tuple[int, int]:
    """(a, c) for the integrated construction.

    c_min <= 2 is used as-is with no widening.  For larger c_min it is
    cheaper to widen: a = ceil(log2(c_min - 1)) bits dropped into the
    first stage halve the residual enough that c = 2 suffices; ties
    (a = 1) also widen, which additionally lowers the stray-key rate.
    """
    c_min = compute_c_min(s, t, r)
    if c_min <= 2:
        return 0, max(c_min, 1)
    a = (c_min - 2).bit_length()  # == ceil(log2(c_min - 1))
    return a, 2


def _if_c1_cost(s: int, t: int, r: int, a: int) -> float:
    # memory of the fused c=1 layout, up to the constant (1 + epsilon)
    return (s + t / 2.0 ** (r + a - 1)) * (r + a)


def compute_a_if_c1(s: int, t: int, r: int) -> int:
    """Widening for the fused c=1 layout, by direct cost scan.

    Every extra bit halves the residual but widens all cells, so the
    cost curve is unimodal: scan a upward and stop when it turns.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    a = 0
    while _if_c1_cost(s, t, r, a + 1) < _if_c1_cost(s, t, r, a):
        a += 1
    return a


def a_if_c1_closed_form(s: int, t: int, r: int) -> int:
    """Closed-form approximation of compute_a_if_c1 (valid when r >> a)."""
    a = 0
    while t * (r - 1) > (s << (r + a)):
        a += 1
    return a


def check_disjoint(S: KeyBatch, T: KeySource, master: int) -> None:
    """Raise DisjointnessViolation when S and T share any key.

    Digest sets are intersected first; candidate digests are confirmed
    against the actual key bytes so a digest collision cannot flag two
    distinct keys.
    """
    seed = derive_seed(master, hashing.ROLE_DISJOINT_CHECK, 0)
    ds = np.sort(S.digests(seed))
    if not len(ds):
        return
    s_keys: set[bytes] | None = None
    overlap: list[bytes] = []
    for chunk in iter_chunks(T):
        dt = chunk.digests(seed)
        hits = np.flatnonzero(np.isin(dt, ds))
        if hits.size:
            if s_keys is None:
                s_keys = set(S.keys())
            for i in hits:
                k = chunk.key(int(i))
                if k in s_keys:
                    overlap.append(k)
    if overlap:
        raise DisjointnessViolation(overlap)


def _stage_values(batch: KeyBatch, width: int):
    """Per-seed fingerprint values for a filter-stage table."""

    def values(seed: int) -> np.ndarray:
        return fingerprint_batch(batch.digests(fingerprint_seed(seed)), width)

    return values


def _build_plain(S: KeyBatch, cfg: BuildConfig, role: int = _ROLE_PLAIN) -> FpfsFilter:
    table = build_with_retries(
        S,
        _stage_values(S, cfg.r),
        cfg.r,
        cfg.epsilon,
        derive_seed(cfg.master_seed, role, 0),
        cfg.max_retries,
        randomize_free_cells=True,
    )
    return FpfsFilter("plain", cfg.r, 0, 0, cfg.epsilon, table, None, len(S), 0, 0)


def build_plain(S: KeyBatch, cfg: BuildConfig) -> FpfsFilter:
    """Ordinary r-bit filter over S; no protected negatives."""
    return _build_plain(S, cfg)


def build_naive(S: KeyBatch, T: KeySource, cfg: BuildConfig) -> FpfsFilter:
    """Single r-bit table over S | T; T stored with flipped fingerprints."""
    check_disjoint(S, T, cfg.master_seed)
    t = len(T)
    if t == 0:
        return _build_plain(S, cfg, _ROLE_NAIVE)
    from .keys import as_batch

    Tb = as_batch(T)
    keys = KeyBatch.concat([S, Tb])
    s = len(S)

    def values(seed: int) -> np.ndarray:
        v = fingerprint_batch(keys.digests(fingerprint_seed(seed)), cfg.r)
        v[s:] ^= np.uint32(1)  # any value != v(x) blocks the match; low bit flip
        return v

    table = build_with_retries(
        keys,
        values,
        cfg.r,
        cfg.epsilon,
        derive_seed(cfg.master_seed, _ROLE_NAIVE, 0),
        cfg.max_retries,
        randomize_free_cells=True,
    )
    return FpfsFilter("naive", cfg.r, 0, 0, cfg.epsilon, table, None, s, t, 0)


def residual_set(first_stage: XorTable, T: KeySource) -> ResidualSet:
    """Exact scan of T against a built first stage.

    The stage's fingerprint width and seed are taken from the table, so
    the result is a pure function of (table, T).  T may be chunked; only
    matching keys are materialized.
    """
    w = first_stage.cell_width
    fp_seed = fingerprint_seed(first_stage.seed)
    matched: list[KeyBatch] = []
    count = 0
    for chunk in iter_chunks(T):
        ev = first_stage.eval_batch(chunk)
        v = fingerprint_batch(chunk.digests(fp_seed), w)
        hits = np.flatnonzero(ev == v)
        if hits.size:
            matched.append(chunk.take(hits))
            count += int(hits.size)
    keys = KeyBatch.concat(matched) if matched else KeyBatch.from_keys([])
    return ResidualSet(keys, count)


def build_tf(S: KeyBatch, T: KeySource, cfg: BuildConfig) -> FpfsFilter:
    """Two tables: (r+a-1)-bit stage over S, 1-bit stage over S | F."""
    check_disjoint(S, T, cfg.master_seed)
    s, t = len(S), len(T)
    if t == 0:
        return _build_plain(S, cfg, _ROLE_TF_FIRST)
    if cfg.auto_a:
        a = compute_a_tf(s, t, cfg.r) if s else 0
    else:
        a = cfg.a
    w1 = cfg.r + a - 1
    if w1 > 32:
        raise ValueError(f"first-stage width {w1} exceeds 32 bits")

    first = build_with_retries(
        S,
        _stage_values(S, w1),
        w1,
        cfg.epsilon,
        derive_seed(cfg.master_seed, _ROLE_TF_FIRST, 0),
        cfg.max_retries,
        randomize_free_cells=True,
    )
    residual = residual_set(first, T)
    second_keys = KeyBatch.concat([S, residual.keys])
    second_values = np.concatenate(
        [np.ones(s, np.uint32), np.zeros(residual.f, np.uint32)]
    )
    second = build_with_retries(
        second_keys,
        second_values,
        1,
        cfg.epsilon,
        derive_seed(cfg.master_seed, _ROLE_TF_SECOND, 0),
        cfg.max_retries,
        randomize_free_cells=True,
    )
    return FpfsFilter("tf", cfg.r, a, 0, cfg.epsilon, first, second, s, t, residual.f)


def build_if(S: KeyBatch, T: KeySource, cfg: BuildConfig) -> FpfsFilter:
    """One fused table: (r+a-1)-bit stage plus c subfilter bit columns.

    All columns share probe positions under a single seed, so the whole
    build (including the residual scan) restarts together when any
    column's peeling fails.  The table is sized for the largest observed
    column load; if the residual outgrows the initial size the sizing
    pass repeats at the larger size before any column is solved.
    """
    check_disjoint(S, T, cfg.master_seed)
    s, t = len(S), len(T)
    if t == 0:
        return _build_plain(S, cfg, _ROLE_IF)
    if cfg.if_c1:
        c = 1
        a = (compute_a_if_c1(s, t, cfg.r) if s else 0) if cfg.auto_a else cfg.a
    else:
        a, c = select_if_params(s, t, cfg.r) if s else (0, 2)
        if not cfg.auto_a:
            a = cfg.a
    w1 = cfg.r + a - 1
    width = w1 + c
    if width > 32:
        raise ValueError(f"fused cell width {width} exceeds 32 bits")
    master = derive_seed(cfg.master_seed, _ROLE_IF, 0)

    expected_f = int(t / 2 ** (cfg.r + a - 1))
    start_load = max(s, _ceil_div(s + expected_f, c))
    attempts = 0
    last_unpeeled = None
    for retry in range(cfg.max_retries + 1):
        attempts += 1
        seed = derive_seed(master, hashing.ROLE_RETRY, retry)
        d_s = S.digests(seed)
        if len(np.unique(d_s)) != len(d_s):
            continue
        result = _try_if_seed(S, T, d_s, seed, cfg, w1, c, start_load)
        if isinstance(result, int):
            last_unpeeled = result
            continue
        cells, segment_len, f = result
        table = XorTable(width, segment_len, seed, cells, retries=retry)
        return FpfsFilter("if", cfg.r, a, c, cfg.epsilon, table, None, s, t, f)
    raise BuildExhausted(attempts, last_unpeeled)


def _try_if_seed(
    S: KeyBatch,
    T: KeySource,
    d_s: np.ndarray,
    seed: int,
    cfg: BuildConfig,
    w1: int,
    c: int,
    start_load: int,
):
    """One fused-build attempt; returns (cells, segment_len, f) or the
    unpeeled count of the failing column."""
    s = len(S)
    fp_seed = fingerprint_seed(seed)
    v_s = fingerprint_batch(S.digests(fp_seed), w1)

    load = start_load
    for _ in range(_MAX_SIZING_PASSES):
        segment_len = table_size(load, cfg.epsilon)
        try:
            order0 = peel(d_s, segment_len)
        except PeelFailure as pf:
            return pf.unpeeled
        fill0 = cell_fill(
            3 * segment_len, w1, derive_seed(seed, hashing.ROLE_CELL_FILL, 0)
        )
        plane0 = solve_cells(order0, v_s, 3 * segment_len, fill0)

        # residual scan against the first-stage plane under this sizing
        matched: list[np.ndarray] = []
        f = 0
        for chunk in iter_chunks(T):
            d_t = chunk.digests(seed)
            H = hashing.positions_batch(d_t, segment_len)
            ev = plane0[H[:, 0]] ^ plane0[H[:, 1]] ^ plane0[H[:, 2]]
            v_t = fingerprint_batch(chunk.digests(fp_seed), w1)
            hits = np.flatnonzero(ev == v_t)
            if hits.size:
                matched.append(d_t[hits])
                f += int(hits.size)

        d_sf = np.concatenate([d_s] + matched) if matched else d_s.copy()
        member = np.zeros(s + f, np.uint32)
        member[:s] = 1
        if c == 1:
            column_keys = [np.arange(s + f)]
        else:
            sel = subfilter_select_batch(d_sf)
            column_keys = [np.flatnonzero(sel == j) for j in (1, 2)]

        max_load = max([s] + [idx.size for idx in column_keys])
        if max_load > load:
            load = max_load  # residual outgrew the table; redo larger
            continue

        cells = plane0.copy()
        for j, idx in enumerate(column_keys):
            try:
                order_j = peel(d_sf[idx], segment_len)
            except PeelFailure as pf:
                return pf.unpeeled
            fill_j = cell_fill(
                3 * segment_len, 1, derive_seed(seed, hashing.ROLE_CELL_FILL, 1 + j)
            )
            plane_j = solve_cells(order_j, member[idx], 3 * segment_len, fill_j)
            cells |= plane_j << np.uint32(w1 + j)
        return cells, segment_len, f
    return s  # sizing failed to stabilize; treat like a peel failure


def build_filter(S: KeyBatch, T: KeySource, cfg: BuildConfig) -> FpfsFilter:
    """Dispatch on cfg.variant; plain ignores T."""
    if cfg.variant == "plain":
        return build_plain(S, cfg)
    if cfg.variant == "naive":
        return build_naive(S, T, cfg)
    if cfg.variant == "tf":
        return build_tf(S, T, cfg)
    return build_if(S, T, cfg)
