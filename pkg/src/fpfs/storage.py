"""Binary filter serialization.

Layout (all integers little-endian):

    magic            4 bytes  b"FPFS"
    format_version   1 byte   (= 1)
    variant          1 byte   0 plain, 1 naive, 2 tf, 3 if
    r, a, c          1 byte each
    reserved         1 byte   (= 0)
    per-table blocks, one per table (plain/naive/if: 1, tf: 2):
        role         1 byte   0 primary, 1 second stage
        seed         8 bytes
        segment_len  8 bytes
        cell_width   1 byte
        cells        ceil(3 * segment_len * cell_width / 8) bytes,
                     cells bit-packed LSB-first in index order
    s, t, f          8 bytes each
    checksum         8 bytes  FNV-1a 64 over all preceding bytes

The checksum is verified on load; the fingerprint seed of each table is
derived from its stored seed, so a loaded filter answers every query
exactly as the one that was saved.
"""

from __future__ import annotations

import struct

import numpy as np

from .filters import FpfsFilter
from .xorfunc import XorTable

MAGIC = b"FPFS"
FORMAT_VERSION = 1

VARIANT_CODES = {"plain": 0, "naive": 1, "tf": 2, "if": 3}
VARIANT_NAMES = {v: k for k, v in VARIANT_CODES.items()}

ROLE_PRIMARY = 0
ROLE_SECOND = 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFF_FFFF_FFFF_FFFF


class FilterFileError(ValueError):
    """Bad magic, version, structure or checksum."""


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def pack_cells(cells: np.ndarray, width: int) -> bytes:
    """Bit-pack w-bit cells LSB-first; exact ceil(len*w/8) bytes."""
    bits = (cells[:, None] >> np.arange(width, dtype=np.uint32)) & np.uint32(1)
    return np.packbits(bits.astype(np.uint8).ravel(), bitorder="little").tobytes()


def unpack_cells(data: bytes, count: int, width: int) -> np.ndarray:
    bits = np.unpackbits(
        np.frombuffer(data, dtype=np.uint8), count=count * width, bitorder="little"
    )
    weights = (np.uint32(1) << np.arange(width, dtype=np.uint32)).astype(np.uint32)
    return (bits.reshape(count, width).astype(np.uint32) * weights).sum(
        axis=1, dtype=np.uint32
    )


def _table_block(role: int, table: XorTable) -> bytes:
    head = struct.pack("<BQQB", role, table.seed, table.segment_len, table.cell_width)
    return head + pack_cells(table.cells, table.cell_width)


def serialize(filt: FpfsFilter) -> bytes:
    out = [
        struct.pack(
            "<4sBBBBBB",
            MAGIC,
            FORMAT_VERSION,
            VARIANT_CODES[filt.variant],
            filt.r,
            filt.a,
            filt.c,
            0,
        )
    ]
    out.append(_table_block(ROLE_PRIMARY, filt.table))
    if filt.table2 is not None:
        out.append(_table_block(ROLE_SECOND, filt.table2))
    out.append(struct.pack("<QQQ", filt.s, filt.t, filt.f))
    body = b"".join(out)
    return body + struct.pack("<Q", fnv1a64(body))


def save_filter(filt: FpfsFilter, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(filt))


def _read_table(data: bytes, off: int) -> tuple[XorTable, int]:
    role, seed, segment_len, width = struct.unpack_from("<BQQB", data, off)
    off += 18
    if role not in (ROLE_PRIMARY, ROLE_SECOND):
        raise FilterFileError(f"unknown table role {role}")
    if not 1 <= width <= 32:
        raise FilterFileError(f"bad cell width {width}")
    if segment_len < 1:
        raise FilterFileError("bad segment length")
    nbytes = -(-3 * segment_len * width // 8)
    if off + nbytes > len(data):
        raise FilterFileError("truncated table block")
    cells = unpack_cells(data[off : off + nbytes], 3 * segment_len, width)
    return XorTable(width, segment_len, seed, cells), off + nbytes


def deserialize(data: bytes) -> FpfsFilter:
    if len(data) < 42:
        raise FilterFileError("file too short")
    body, (checksum,) = data[:-8], struct.unpack("<Q", data[-8:])
    if fnv1a64(body) != checksum:
        raise FilterFileError("checksum mismatch")
    magic, version, variant_code, r, a, c, reserved = struct.unpack_from(
        "<4sBBBBBB", body, 0
    )
    if magic != MAGIC:
        raise FilterFileError("bad magic")
    if version != FORMAT_VERSION:
        raise FilterFileError(f"unsupported format version {version}")
    if variant_code not in VARIANT_NAMES:
        raise FilterFileError(f"unknown variant code {variant_code}")
    variant = VARIANT_NAMES[variant_code]

    off = 10
    table, off = _read_table(body, off)
    table2 = None
    if variant == "tf":
        table2, off = _read_table(body, off)
    if off + 24 != len(body):
        raise FilterFileError("trailing or missing bytes")
    s, t, f = struct.unpack_from("<QQQ", body, off)
    return FpfsFilter(variant, r, a, c, 0.0, table, table2, s, t, f)


def load_filter(path: str) -> FpfsFilter:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
