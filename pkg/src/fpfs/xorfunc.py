"""Construction and evaluation of w-bit xor-probing static functions.

A table holds 3*segment_len w-bit cells split into three equal segments.
Every key probes one cell per segment; the xor of the three cells equals
the key's stored value.  Construction peels the random 3-partite
hypergraph induced by the keys' probe positions: repeatedly extract a
cell referenced by exactly one remaining key, then assign cell values by
back-substitution in reverse peel order.  Peeling fails exactly when a
non-empty 2-core remains, in which case the build retries with the next
derived seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hashing import ROLE_CELL_FILL, derive_seed, digest, mix64_array, positions, positions_batch
from .keys import KeyBatch

DEFAULT_EPSILON = 0.23
TABLE_SLACK_CELLS = 32
DEFAULT_MAX_RETRIES = 100

# Positions draw 32 bits per probe, so a segment longer than 2**31 would
# start to quantize; well before that, key counts this large belong in a
# sharded build anyway.
MAX_SEGMENT_LEN = 1 << 31


class PeelFailure(Exception):
    """Peeling stopped with a non-empty 2-core."""

    def __init__(self, unpeeled: int):
        super().__init__(f"peeling left {unpeeled} keys in the 2-core")
        self.unpeeled = unpeeled


class BuildExhausted(Exception):
    """No derived seed produced a peelable table within the retry budget."""

    def __init__(self, attempts: int, last_unpeeled: int | None = None):
        super().__init__(f"construction failed after {attempts} attempts")
        self.attempts = attempts
        self.last_unpeeled = last_unpeeled


def table_size(n: int, epsilon: float = DEFAULT_EPSILON) -> int:
    """Segment length for n keys at the given fractional overhead.

    Cells total 3 * segment_len >= (1 + epsilon) * n + slack; the fixed
    32-cell slack keeps tiny sets constructible.
    """
    if n < 0:
        raise ValueError("key count must be >= 0")
    needed = int(np.ceil((1.0 + epsilon) * n)) + TABLE_SLACK_CELLS
    segment_len = -(-needed // 3)
    if segment_len > MAX_SEGMENT_LEN:
        raise ValueError(f"{n} keys exceed the supported table size")
    return segment_len


@dataclass
class PeelOrder:
    """Peel sequence: (cell, key) pairs plus the per-round batching.

    Keys recorded between round_starts[i] and round_starts[i+1] were
    peeled simultaneously; their designated cells are disjoint from every
    cell any of them probes that is designated in the same round, so
    assignment can process a whole round vectorized, rounds reversed.
    """

    cells: np.ndarray
    keys: np.ndarray
    round_starts: np.ndarray
    positions: np.ndarray

    def __len__(self) -> int:
        return len(self.cells)


def peel(digests: np.ndarray, segment_len: int) -> PeelOrder:
    """Peel the 3-partite hypergraph of the digests' probe positions.

    Raises PeelFailure if a 2-core remains.  Each cell tracks the count
    and the running xor of incident key ids, so a degree-1 cell exposes
    its sole key directly.
    """
    if segment_len < 1:
        raise ValueError("segment_len must be >= 1")
    n = len(digests)
    ncells = 3 * segment_len
    H = positions_batch(digests, segment_len)
    if n == 0:
        return PeelOrder(
            np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(1, np.int64), H
        )

    flat = H.ravel()
    cnt = np.bincount(flat, minlength=ncells).astype(np.int32)
    keyxor = np.zeros(ncells, np.int64)
    np.bitwise_xor.at(keyxor, flat, np.repeat(np.arange(n, dtype=np.int64), 3))

    cell_order = np.empty(n, np.int64)
    key_order = np.empty(n, np.int64)
    round_starts = [0]
    filled = 0
    # Scratch stamps used to drop duplicates without sorting: a fancy
    # assignment leaves the last write per index, so comparing the
    # written stamp against its own position keeps one entry per value.
    key_stamp = np.full(n, -1, np.int64)
    cell_stamp = np.full(ncells, -1, np.int64)
    frontier = np.flatnonzero(cnt == 1)
    while frontier.size:
        f = frontier[cnt[frontier] == 1]
        if not f.size:
            break
        cand = keyxor[f]
        stamps = np.arange(cand.size, dtype=np.int64)
        key_stamp[cand] = stamps
        keep = key_stamp[cand] == stamps
        f = f[keep]
        uk = cand[keep]
        m = uk.size
        cell_order[filled : filled + m] = f
        key_order[filled : filled + m] = uk
        filled += m
        round_starts.append(filled)

        touched = H[uk].ravel()
        np.bitwise_xor.at(keyxor, touched, np.repeat(uk, 3))
        np.add.at(cnt, touched, np.int32(-1))
        cand_cells = touched[cnt[touched] == 1]
        stamps = np.arange(cand_cells.size, dtype=np.int64)
        cell_stamp[cand_cells] = stamps
        frontier = cand_cells[cell_stamp[cand_cells] == stamps]

    if filled != n:
        raise PeelFailure(n - filled)
    return PeelOrder(cell_order, key_order, np.asarray(round_starts, np.int64), H)


def cell_fill(ncells: int, width: int, fill_seed: int) -> np.ndarray:
    """Deterministic random cell prefill.

    Undesignated cells carry no constraint from the inserted keys; when
    they stay zero, probe triples that miss every designated cell give
    the eval distribution an atom at 0 and bias 1-bit stages below a
    fair coin.  Filling them with seeded random bits keeps stray-key
    match rates at exactly 2**-w without touching any inserted key's
    value (back-substitution runs on top of the fill).
    """
    raw = mix64_array(
        np.arange(ncells, dtype=np.uint64) + _seed_u64(fill_seed)
    )
    return (raw & np.uint64((1 << width) - 1)).astype(np.uint32)


def _seed_u64(seed: int) -> np.uint64:
    return np.uint64(seed & 0xFFFF_FFFF_FFFF_FFFF)


def solve_cells(
    order: PeelOrder,
    values: np.ndarray,
    ncells: int,
    prefill: np.ndarray | None = None,
) -> np.ndarray:
    """Back-substitute a peel order into a uint32 cell array.

    Processes rounds in reverse; within a round, every read refers to a
    cell assigned in a later round or never designated (prefill or
    zero), so the round is computed with pure gathers.
    """
    if prefill is None:
        cells = np.zeros(ncells, dtype=np.uint32)
    else:
        cells = prefill.copy()
        # designated cells contribute to their own xor below; they must
        # read as zero until written
        cells[order.cells] = 0
    vals = values.astype(np.uint32, copy=False)
    H = order.positions
    rs = order.round_starts
    for r in range(len(rs) - 1, 0, -1):
        lo, hi = int(rs[r - 1]), int(rs[r])
        k = order.keys[lo:hi]
        v = vals[k] ^ cells[H[k, 0]] ^ cells[H[k, 1]] ^ cells[H[k, 2]]
        cells[order.cells[lo:hi]] = v
    return cells


@dataclass
class XorTable:
    """An immutable built static function.

    eval of any key is the xor of the three probed cells; for keys
    inserted at build this equals their stored value exactly.
    """

    cell_width: int
    segment_len: int
    seed: int
    cells: np.ndarray
    retries: int = 0

    @property
    def num_cells(self) -> int:
        return 3 * self.segment_len

    @property
    def total_bits(self) -> int:
        return 3 * self.segment_len * self.cell_width

    def get_cell(self, idx: int) -> int:
        """Single cell read; the unit the probe-counting tests meter."""
        return int(self.cells[idx])

    def eval_key(self, key: bytes) -> int:
        d = digest(key, self.seed)
        p0, p1, p2 = positions(d, self.segment_len)
        return self.get_cell(p0) ^ self.get_cell(p1) ^ self.get_cell(p2)

    def eval_digests(self, digests: np.ndarray) -> np.ndarray:
        H = positions_batch(digests, self.segment_len)
        return self.cells[H[:, 0]] ^ self.cells[H[:, 1]] ^ self.cells[H[:, 2]]

    def eval_batch(self, batch: KeyBatch) -> np.ndarray:
        return self.eval_digests(batch.digests(self.seed))


def assign(
    order: PeelOrder,
    values: np.ndarray,
    table: XorTable,
    randomize_free_cells: bool = False,
) -> XorTable:
    """Solve the table so every peeled key evaluates to its value.

    By default undesignated cells are left zero; filter builds pass
    randomize_free_cells to draw them from a seeded stream instead (see
    cell_fill).
    """
    prefill = None
    if randomize_free_cells:
        fill_seed = derive_seed(table.seed, ROLE_CELL_FILL, 0)
        prefill = cell_fill(table.num_cells, table.cell_width, fill_seed)
    table.cells = solve_cells(order, values, table.num_cells, prefill)
    return table


def build_with_retries(
    keys: KeyBatch,
    values: np.ndarray | Callable[[int], np.ndarray],
    cell_width: int,
    epsilon: float = DEFAULT_EPSILON,
    master: int = 0,
    max_retries: int = DEFAULT_MAX_RETRIES,
    role: int = 0,
    segment_len: int | None = None,
    randomize_free_cells: bool = False,
) -> XorTable:
    """Build a static function, re-seeding until peeling succeeds.

    ``values`` is either a fixed uint32 array or a callable mapping the
    attempted seed to the per-key values (fingerprints depend on the
    seed).  Raises BuildExhausted after max_retries failed attempts
    beyond the first.
    """
    if not 1 <= cell_width <= 32:
        raise ValueError("cell width must be in 1..32")
    L = segment_len if segment_len is not None else table_size(len(keys), epsilon)
    last_unpeeled = None
    attempts = 0
    for retry in range(max_retries + 1):
        seed = derive_seed(master, role, retry)
        digests = keys.digests(seed)
        attempts += 1
        if len(np.unique(digests)) != len(digests):
            last_unpeeled = len(digests)
            continue
        try:
            order = peel(digests, L)
        except PeelFailure as pf:
            last_unpeeled = pf.unpeeled
            continue
        vals = values(seed) if callable(values) else values
        table = XorTable(cell_width, L, seed, np.zeros(0, np.uint32), retries=retry)
        return assign(order, vals, table, randomize_free_cells)
    raise BuildExhausted(attempts, last_unpeeled)
