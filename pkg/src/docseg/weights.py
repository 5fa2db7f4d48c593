"""Flat key -> tensor weight container with a simple binary file format.

Format (all integers little-endian):

    magic   8 bytes  b"DSEGWTS1"
    count   uint32
    entries, repeated `count` times:
        name_len uint16, name utf-8 bytes
        ndim     uint8
        dims     ndim * uint32
        payload  prod(dims) * float32 (little-endian)

Entry order is preserved. This is the interchange format for pretrained
encoder weights and for training checkpoints.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"DSEGWTS1"


class WeightFormatError(ValueError):
    pass


class WeightStore:
    """Ordered mapping of parameter name to float32 ndarray."""

    def __init__(self, entries=None):
        self._entries: "OrderedDict[str, np.ndarray]" = OrderedDict()
        if entries:
            for name, arr in (entries.items() if isinstance(entries, dict)
                              else entries):
                self[name] = arr

    def __setitem__(self, name: str, arr) -> None:
        self._entries[name] = np.ascontiguousarray(arr, dtype=np.float32)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def kernel_names(self) -> list[str]:
        """Names of convolution kernels (4-d entries)."""
        return [n for n, a in self._entries.items() if a.ndim == 4]

    def save(self, path) -> None:
        path = Path(path)
        with path.open("wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(self._entries)))
            for name, arr in self._entries.items():
                encoded = name.encode("utf-8")
                f.write(struct.pack("<H", len(encoded)))
                f.write(encoded)
                f.write(struct.pack("<B", arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                f.write(arr.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "WeightStore":
        path = Path(path)
        data = path.read_bytes()
        if data[:8] != MAGIC:
            raise WeightFormatError(f"{path}: bad magic, not a weight file")
        store = cls()
        offset = 8
        (count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", data, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
            offset += 4 * n
            store[name] = arr.reshape(shape)
        if offset != len(data):
            raise WeightFormatError(f"{path}: trailing bytes after last entry")
        return store
