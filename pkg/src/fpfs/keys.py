"""Key containers and dataset ingestion.

Keys are arbitrary byte strings.  ``KeyBatch`` packs a set of keys into
a zero-padded uint8 matrix plus a length vector so the whole batch can
be hashed with vectorized uint64 arithmetic; the padding never aliases
real content because key lengths are folded into the digest.

Dataset files are UTF-8, one key per line, LF-terminated, keys verbatim.
Empty lines and duplicate keys are rejected at ingestion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .hashing import digest_batch


class DatasetError(ValueError):
    """Raised for malformed dataset files (empty or duplicate keys)."""


@dataclass
class KeyBatch:
    """A fixed collection of byte-string keys in hash-ready layout.

    ``mat`` is (n, 8*k) uint8, each row a zero-padded key; ``lens`` the
    true byte length of each key.
    """

    mat: np.ndarray
    lens: np.ndarray

    def __post_init__(self):
        if self.mat.shape[1] % 8 != 0:
            raise ValueError("key matrix width must be a multiple of 8")

    @classmethod
    def from_keys(cls, keys: Sequence[bytes]) -> "KeyBatch":
        n = len(keys)
        if n == 0:
            return cls(np.zeros((0, 8), dtype=np.uint8), np.zeros(0, dtype=np.int64))
        lens = np.fromiter((len(k) for k in keys), dtype=np.int64, count=n)
        width = max(8, -8 * (-int(lens.max()) // 8))
        mat = np.zeros((n, width), dtype=np.uint8)
        for i, k in enumerate(keys):
            mat[i, : len(k)] = np.frombuffer(k, dtype=np.uint8)
        return cls(mat, lens)

    @classmethod
    def from_tokens(cls, tokens: np.ndarray) -> "KeyBatch":
        """From a numpy 'S' array of uniform-width keys with no NUL bytes."""
        width = tokens.dtype.itemsize
        pad = -8 * (-width // 8)
        mat = np.zeros((len(tokens), pad), dtype=np.uint8)
        mat[:, :width] = tokens.view(np.uint8).reshape(len(tokens), width)
        lens = np.full(len(tokens), width, dtype=np.int64)
        return cls(mat, lens)

    @property
    def words(self) -> np.ndarray:
        """(n, k) little-endian uint64 view of the key matrix."""
        return self.mat.view("<u8")

    def __len__(self) -> int:
        return self.mat.shape[0]

    def key(self, i: int) -> bytes:
        return self.mat[i, : self.lens[i]].tobytes()

    def keys(self) -> list[bytes]:
        return [self.key(i) for i in range(len(self))]

    def take(self, idx: np.ndarray) -> "KeyBatch":
        return KeyBatch(self.mat[idx], self.lens[idx])

    def digests(self, seed: int) -> np.ndarray:
        return digest_batch(self.words, self.lens, seed)

    @staticmethod
    def concat(parts: Sequence["KeyBatch"]) -> "KeyBatch":
        parts = [p for p in parts if len(p)]
        if not parts:
            return KeyBatch.from_keys([])
        width = max(p.mat.shape[1] for p in parts)
        mats = []
        for p in parts:
            if p.mat.shape[1] == width:
                mats.append(p.mat)
            else:
                padded = np.zeros((len(p), width), dtype=np.uint8)
                padded[:, : p.mat.shape[1]] = p.mat
                mats.append(padded)
        return KeyBatch(np.concatenate(mats), np.concatenate([p.lens for p in parts]))


@dataclass
class StreamedKeys:
    """A large key collection visited in chunks, re-iterable at will.

    ``chunks`` must return a fresh iterator of KeyBatch each call; the
    total ``count`` is known up front so parameter selection can run
    before any scan.
    """

    count: int
    chunks: Callable[[], Iterator[KeyBatch]]

    def __len__(self) -> int:
        return self.count


KeySource = KeyBatch | StreamedKeys


def iter_chunks(source: KeySource) -> Iterator[KeyBatch]:
    if isinstance(source, StreamedKeys):
        yield from source.chunks()
    else:
        yield source


def as_batch(source: KeySource) -> KeyBatch:
    if isinstance(source, KeyBatch):
        return source
    return KeyBatch.concat(list(source.chunks()))


def read_dataset(path: str) -> KeyBatch:
    """Load a dataset file: one key per line, no empties, no duplicates."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.endswith(b"\n"):
        data = data[:-1]
    if not data:
        return KeyBatch.from_keys([])
    lines = data.split(b"\n")
    seen: set[bytes] = set()
    for i, line in enumerate(lines):
        if not line:
            raise DatasetError(f"{path}: empty key at line {i + 1}")
        if line in seen:
            raise DatasetError(f"{path}: duplicate key at line {i + 1}: {line[:40]!r}")
        seen.add(line)
    return KeyBatch.from_keys(lines)


def write_dataset(path: str, keys: Iterable[bytes]) -> None:
    with open(path, "wb") as fh:
        for k in keys:
            fh.write(k)
            fh.write(b"\n")
