"""Keyed 64-bit hashing and the derived probe streams.

Every key is reduced to 64-bit digests by a seeded multiply-xor-shift
mixer (the splitmix64 finalizer applied per 8-byte chunk).  A digest is
consumed by three readers that are kept on separate bit streams:

    positions        cell indices for the 3 probes, one per table segment;
                     pure function of digest bits 0..62
    subfilter_select subfilter index in {1, 2}; digest bit 63 only
    fingerprint      low ``bits`` bits of a *separate* digest obtained
                     with a role-tweaked seed (see ``fingerprint_seed``)

Keeping the fingerprint on its own digest means positions, selector and
fingerprint never share source bits, so matching a fingerprint carries
no information about where the key probes.

Constants (all fixed, recorded here and exercised by committed test
vectors in tests/test_hashing.py):

    MIX_A = 0xBF58476D1CE4E5B9   splitmix64 finalizer multiplier 1
    MIX_B = 0x94D049BB133111EB   splitmix64 finalizer multiplier 2
    CHUNK_MULT = 0x87C37B91114253D5   per-chunk spread multiplier
    LEN_MULT   = 0xFF51AFD7ED558CCD   key-length injection multiplier
    GOLDEN     = 0x9E3779B97F4A7C15   role/salt spacing constant
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFF_FFFF_FFFF_FFFF

GOLDEN = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB
CHUNK_MULT = 0x87C37B91114253D5
LEN_MULT = 0xFF51AFD7ED558CCD

# Digest bit 63 feeds the subfilter selector; positions only ever read
# bits 0..62 (see POSITION_SOURCE_MASK), so the two streams are disjoint.
SELECTOR_BIT = 63
POSITION_SOURCE_MASK = (1 << SELECTOR_BIT) - 1

# Per-probe salts: each probe re-mixes the position source bits with its
# own additive salt, giving three decorrelated streams of full width.
POSITION_SALTS = (GOLDEN, (2 * GOLDEN) & MASK64, (3 * GOLDEN) & MASK64)

# Roles for seed derivation.  Distinct (role, retry) pairs must yield
# distinct seeds; roles also namespace the per-table masters of a build.
ROLE_PRIMARY_TABLE = 1
ROLE_SECOND_TABLE = 2
ROLE_FINGERPRINT = 3
ROLE_DISJOINT_CHECK = 4
ROLE_RETRY = 5
ROLE_CELL_FILL = 6

_ROLE_MULT = 0xD6E8FEB86659FD93
_RETRY_MULT = 0xCA5A826395121157

_U = np.uint64


def mix64(x: int) -> int:
    """splitmix64 finalizer: bijective avalanche mix of a 64-bit value."""
    x &= MASK64
    x ^= x >> 30
    x = (x * MIX_A) & MASK64
    x ^= x >> 27
    x = (x * MIX_B) & MASK64
    x ^= x >> 31
    return x


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized mix64 over a uint64 array (input is not modified)."""
    x = x.astype(np.uint64, copy=True)
    t = x >> _U(30)
    x ^= t
    x *= _U(MIX_A)
    np.right_shift(x, _U(27), out=t)
    x ^= t
    x *= _U(MIX_B)
    np.right_shift(x, _U(31), out=t)
    x ^= t
    return x


def digest(key: bytes, seed: int) -> int:
    """64-bit keyed digest of an arbitrary byte string.

    The key is folded in 8-byte little-endian chunks (the final chunk
    zero-padded); the key length is injected into the initial state so
    padding cannot alias keys of different lengths.
    """
    h = mix64(seed ^ GOLDEN ^ ((len(key) * LEN_MULT) & MASK64))
    for off in range(0, len(key), 8):
        chunk = int.from_bytes(key[off : off + 8], "little")
        h = mix64(h ^ ((chunk * CHUNK_MULT) & MASK64))
    return h


def digest_batch(words: np.ndarray, lens: np.ndarray, seed: int) -> np.ndarray:
    """Vectorized ``digest`` over packed keys.

    ``words`` is an (n, k) uint64 array of little-endian 8-byte chunks
    (zero-padded) and ``lens`` the true byte length per key.  Bit-exact
    with the scalar path for every key.
    """
    lens64 = lens.astype(np.uint64, copy=False)
    h = mix64_array(_U(seed) ^ _U(GOLDEN) ^ (lens64 * _U(LEN_MULT)))
    if words.shape[0] == 0:
        return h
    nchunks = (lens64 + _U(7)) >> _U(3)
    uniform = bool((lens == lens[0]).all())
    for j in range(words.shape[1]):
        mixed = mix64_array(h ^ (words[:, j] * _U(CHUNK_MULT)))
        if uniform:
            h = mixed if j < int(nchunks[0]) else h
        else:
            h = np.where(_U(j) < nchunks, mixed, h)
    return h


def derive_seed(master: int, role: int, retry: int) -> int:
    """Per-table seed from a master seed, a role tag and a retry index."""
    h = mix64(master ^ GOLDEN ^ ((role * _ROLE_MULT) & MASK64))
    return mix64(h ^ ((retry * _RETRY_MULT) & MASK64))


def fingerprint_seed(table_seed: int) -> int:
    """Seed of the fingerprint digest paired with a table's position seed."""
    return derive_seed(table_seed, ROLE_FINGERPRINT, 0)


def positions(d: int, segment_len: int) -> tuple[int, int, int]:
    """Probe cells of a digest: one per segment, strictly increasing.

    Each probe re-mixes digest bits 0..62 with its own salt and maps the
    top 32 bits onto [0, segment_len) by multiply-shift, then offsets
    into its segment.  Bit 63 (the selector bit) is never read.
    """
    base = d & POSITION_SOURCE_MASK
    out = []
    for i, salt in enumerate(POSITION_SALTS):
        m = mix64(base + salt)
        out.append(i * segment_len + (((m >> 32) * segment_len) >> 32))
    return out[0], out[1], out[2]


def positions_batch(d: np.ndarray, segment_len: int) -> np.ndarray:
    """Vectorized ``positions``: (n, 3) int64 cell indices."""
    base = d & _U(POSITION_SOURCE_MASK)
    seg = _U(segment_len)
    h = np.empty((d.shape[0], 3), dtype=np.int64)
    for i, salt in enumerate(POSITION_SALTS):
        m = mix64_array(base + _U(salt))
        local = ((m >> _U(32)) * seg) >> _U(32)
        h[:, i] = local.astype(np.int64)
        h[:, i] += i * segment_len
    return h


def fingerprint(d: int, bits: int) -> int:
    """Value in [0, 2**bits) from the low bits of a fingerprint digest."""
    if not 1 <= bits <= 32:
        raise ValueError(f"fingerprint width must be in 1..32, got {bits}")
    return d & ((1 << bits) - 1)


def fingerprint_batch(d: np.ndarray, bits: int) -> np.ndarray:
    """Vectorized ``fingerprint``; returns uint32."""
    if not 1 <= bits <= 32:
        raise ValueError(f"fingerprint width must be in 1..32, got {bits}")
    return (d & _U((1 << bits) - 1)).astype(np.uint32)


def subfilter_select(d: int) -> int:
    """Subfilter index in {1, 2} from the selector bit of the digest."""
    return 1 + (d >> SELECTOR_BIT)


def subfilter_select_batch(d: np.ndarray) -> np.ndarray:
    """Vectorized ``subfilter_select``; returns uint8 values in {1, 2}."""
    return (_U(1) + (d >> _U(SELECTOR_BIT))).astype(np.uint8)
