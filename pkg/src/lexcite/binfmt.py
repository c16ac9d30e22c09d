"""Magic/version/payload envelope shared by the model, embedding and KNN files.

Layout: 4 magic bytes, little-endian u32 format version, then a sequence of
blocks. Integers are little-endian; strings are u32 length + UTF-8 bytes;
arrays carry their dtype code, rank and shape ahead of row-major data.
"""

from __future__ import annotations

import json
import struct

import numpy as np


class FormatError(ValueError):
    """Unreadable file: bad magic, unsupported version or corrupt payload."""


class CorruptFileError(FormatError):
    pass


class VersionError(FormatError):
    pass


_DTYPES = {b"f4": np.dtype("<f4"), b"f8": np.dtype("<f8"), b"i8": np.dtype("<i8"), b"i4": np.dtype("<i4")}


class Writer:
    def __init__(self, fh, magic: bytes, version: int):
        self.fh = fh
        fh.write(magic)
        self.u32(version)

    def u32(self, v: int):
        self.fh.write(struct.pack("<I", v))

    def u64(self, v: int):
        self.fh.write(struct.pack("<Q", v))

    def string(self, s: str):
        b = s.encode("utf-8")
        self.u32(len(b))
        self.fh.write(b)

    def json(self, obj):
        self.string(json.dumps(obj, sort_keys=True))

    def strings(self, items):
        self.u32(len(items))
        for s in items:
            self.string(s)

    def array(self, a: np.ndarray):
        for code, dt in _DTYPES.items():
            if a.dtype.kind == dt.kind and a.dtype.itemsize == dt.itemsize:
                break
        else:
            raise TypeError(f"unsupported dtype {a.dtype}")
        self.fh.write(code)
        self.u32(a.ndim)
        for s in a.shape:
            self.u64(s)
        self.fh.write(np.ascontiguousarray(a, dtype=dt).tobytes())


class Reader:
    def __init__(self, fh, magic: bytes, version: int, what: str = "file"):
        self.fh = fh
        self.what = what
        got = fh.read(len(magic))
        if got != magic:
            raise FormatError(f"{what}: bad magic {got!r}, expected {magic!r}")
        v = self.u32()
        if v != version:
            raise VersionError(f"{what}: format version {v} not supported (expected {version})")

    def _read(self, n: int) -> bytes:
        b = self.fh.read(n)
        if len(b) != n:
            raise CorruptFileError(f"{self.what}: truncated file")
        return b

    def u32(self) -> int:
        return struct.unpack("<I", self._read(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._read(8))[0]

    def string(self) -> str:
        n = self.u32()
        try:
            return self._read(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptFileError(f"{self.what}: invalid UTF-8 ({e})") from None

    def json(self):
        try:
            return json.loads(self.string())
        except json.JSONDecodeError as e:
            raise CorruptFileError(f"{self.what}: corrupt config block ({e})") from None

    def strings(self) -> list[str]:
        return [self.string() for _ in range(self.u32())]

    def array(self) -> np.ndarray:
        code = self._read(2)
        if code not in _DTYPES:
            raise CorruptFileError(f"{self.what}: unknown dtype code {code!r}")
        dt = _DTYPES[code]
        ndim = self.u32()
        if ndim > 8:
            raise CorruptFileError(f"{self.what}: implausible array rank {ndim}")
        shape = tuple(self.u64() for _ in range(ndim))
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        return np.frombuffer(self._read(n * dt.itemsize), dtype=dt).reshape(shape).copy()

    def expect_end(self):
        if self.fh.read(1):
            raise CorruptFileError(f"{self.what}: trailing bytes after payload")

