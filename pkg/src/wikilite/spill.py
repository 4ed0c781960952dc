"""External grouping of ``(key, value)`` pairs for index builds.

Pairs accumulate in memory up to a limit, then are written as a sorted run
file.  :meth:`Grouper.groups` k-way merges all runs and yields each key
once, in ascending byte order, with the union of its values.
"""

from __future__ import annotations

import heapq
import itertools
import os
import shutil
import struct
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Iterator

import numpy as np

from .codec import decode_posting_list, encode_posting

_LEN = struct.Struct(">I")
_SMALL = 64  # groups shorter than this stay plain lists


class IdCodec:
    """Values are unsigned ids; groups are sorted unique lists or uint64 arrays.

    Most groups are a handful of ids, where plain Python beats numpy.
    """

    @staticmethod
    def finish(values: list):
        if len(values) < _SMALL:
            return sorted(set(values))
        return np.unique(np.asarray(values, dtype=np.uint64))

    encode = staticmethod(encode_posting)
    decode = staticmethod(decode_posting_list)

    @staticmethod
    def merge(groups: list):
        if len(groups) == 1:
            return groups[0]
        if sum(len(g) for g in groups) < _SMALL:
            return sorted(set(itertools.chain.from_iterable(groups)))
        return np.unique(np.concatenate([np.asarray(g, dtype=np.uint64) for g in groups]))


class TermCodec:
    """Values are whitespace-free strings; groups are sorted unique lists."""

    @staticmethod
    def finish(values: list) -> list[str]:
        return sorted(set(values))

    @staticmethod
    def encode(group: list[str]) -> bytes:
        return "\n".join(group).encode()

    @staticmethod
    def decode(data: bytes) -> list[str]:
        return data.decode().split("\n")

    @staticmethod
    def merge(groups: list) -> list[str]:
        if len(groups) == 1:
            return groups[0]
        return sorted(set(itertools.chain.from_iterable(groups)))


class Grouper:
    def __init__(self, codec, directory=None, limit: int = 2_000_000):
        self.codec = codec
        self.limit = limit
        self._parent = directory
        self._dir = None
        self._runs: list[Path] = []
        self._buffer = defaultdict(list)
        self._size = 0

    def add(self, key: bytes, value) -> None:
        self._buffer[key].append(value)
        self._size += 1
        if self._size >= self.limit:
            self._spill()

    def add_many(self, key: bytes, values) -> None:
        self._buffer[key].extend(values)
        self._size += len(values)
        if self._size >= self.limit:
            self._spill()

    @property
    def run_count(self) -> int:
        return len(self._runs)

    def _sorted_buffer(self):
        finish = self.codec.finish
        for key in sorted(self._buffer):
            yield key, finish(self._buffer[key])

    def _spill(self) -> None:
        if self._dir is None:
            if self._parent is not None:
                os.makedirs(self._parent, exist_ok=True)
            self._dir = Path(tempfile.mkdtemp(prefix="runs-", dir=self._parent))
        path = self._dir / f"run{len(self._runs):05d}"
        encode = self.codec.encode
        with open(path, "wb") as fh:
            for key, group in self._sorted_buffer():
                payload = encode(group)
                fh.write(_LEN.pack(len(key)))
                fh.write(key)
                fh.write(_LEN.pack(len(payload)))
                fh.write(payload)
        self._runs.append(path)
        self._buffer = defaultdict(list)
        self._size = 0

    def _read_run(self, path: Path):
        decode = self.codec.decode
        with open(path, "rb") as fh:
            while True:
                head = fh.read(4)
                if not head:
                    return
                key = fh.read(_LEN.unpack(head)[0])
                payload = fh.read(_LEN.unpack(fh.read(4))[0])
                yield key, decode(payload)

    def groups(self) -> Iterator[tuple[bytes, object]]:
        """Yield merged ``(key, group)`` pairs in ascending key order, then clean up."""
        try:
            if not self._runs:
                yield from self._sorted_buffer()
                return
            sources = [self._read_run(p) for p in self._runs]
            if self._buffer:
                sources.append(self._sorted_buffer())
            merged = heapq.merge(*sources, key=lambda kv: kv[0])
            for key, items in itertools.groupby(merged, key=lambda kv: kv[0]):
                yield key, self.codec.merge([g for _, g in items])
        finally:
            self.close()

    def close(self) -> None:
        self._buffer = defaultdict(list)
        self._size = 0
        self._runs = []
        if self._dir is not None:
            shutil.rmtree(self._dir, ignore_errors=True)
            self._dir = None
