"""Single-file binary container for named tensors.

Layout (all scalars little-endian)::

    b"FFIN"  u32 version=1  u32 record_count
    per record: u16 name_len, name (utf-8), u8 dtype, u8 rank, u32 extents[rank], u64 offset
    payload: records back to back; offsets are relative to the payload start

dtype codes: 0 = float32, 1 = uint8, 2 = float64.
"""

from __future__ import annotations

import json
import struct
from collections.abc import Iterator, MutableMapping
from pathlib import Path

import numpy as np

from .errors import BoundsError, FormatError, MissingRecordError

MAGIC = b"FFIN"
VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("u1"): 1, np.dtype("<f8"): 2}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


class DatasetContainer(MutableMapping):
    """Ordered mapping of record name to array, persisted in the layout above."""

    def __init__(self, records: dict[str, np.ndarray] | None = None):
        self._records: dict[str, np.ndarray] = {}
        for k, v in (records or {}).items():
            self[k] = v

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._records[name]
        except KeyError:
            raise MissingRecordError(f"no record named {name!r}") from None

    def __setitem__(self, name: str, value) -> None:
        if not name:
            raise ValueError("record names must be non-empty")
        arr = np.asarray(value)
        if arr.dtype.newbyteorder("<") not in DTYPE_CODES and arr.dtype not in DTYPE_CODES:
            raise FormatError(f"unsupported dtype {arr.dtype} for record {name!r}")
        self._records[name] = arr

    def __delitem__(self, name: str) -> None:
        del self._records[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetContainer) or list(self) != list(other):
            return False
        return all(self[k].dtype == other[k].dtype and self[k].shape == other[k].shape
                   and self[k].tobytes() == other[k].tobytes() for k in self)

    # -- text helpers -------------------------------------------------------
    def put_json(self, name: str, obj) -> None:
        self[name] = np.frombuffer(json.dumps(obj, sort_keys=True).encode("utf-8"), dtype=np.uint8)

    def get_json(self, name: str):
        return json.loads(self[name].tobytes().decode("utf-8"))

    # -- serialisation ------------------------------------------------------
    def to_bytes(self) -> bytes:
        header = [MAGIC, struct.pack("<II", VERSION, len(self._records))]
        payload = []
        offset = 0
        for name, arr in self._records.items():
            dt = arr.dtype.newbyteorder("<") if arr.dtype.itemsize > 1 else arr.dtype
            code = DTYPE_CODES[np.dtype(dt)]
            raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
            enc = name.encode("utf-8")
            header.append(struct.pack("<H", len(enc)) + enc)
            header.append(struct.pack("<BB", code, arr.ndim))
            header.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            header.append(struct.pack("<Q", offset))
            payload.append(raw)
            offset += len(raw)
        return b"".join(header + payload)

    @classmethod
    def from_bytes(cls, buf: bytes) -> DatasetContainer:
        view = memoryview(buf)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise BoundsError("container header truncated")
            chunk = view[pos:pos + n]
            pos += n
            return chunk

        if bytes(take(4)) != MAGIC:
            raise FormatError("bad magic; not an FFIN container")
        version, count = struct.unpack("<II", take(8))
        if version != VERSION:
            raise FormatError(f"unsupported container version {version}")
        entries = []
        for _ in range(count):
            (nlen,) = struct.unpack("<H", take(2))
            name = bytes(take(nlen)).decode("utf-8")
            code, rank = struct.unpack("<BB", take(2))
            if code not in CODE_DTYPES:
                raise FormatError(f"unknown dtype code {code} for record {name!r}")
            shape = struct.unpack(f"<{rank}I", take(4 * rank))
            (offset,) = struct.unpack("<Q", take(8))
            entries.append((name, CODE_DTYPES[code], shape, offset))
        payload = view[pos:]
        out = cls()
        for name, dt, shape, offset in entries:
            nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if offset + nbytes > len(payload):
                raise BoundsError(f"record {name!r} extends past the payload ({offset}+{nbytes} > {len(payload)})")
            arr = np.frombuffer(payload[offset:offset + nbytes], dtype=dt).reshape(shape)
            out._records[name] = arr.astype(dt.newbyteorder("="), copy=True)
        return out


def write_container(container: DatasetContainer, path: str | Path) -> None:
    Path(path).write_bytes(container.to_bytes())


def read_container(path: str | Path) -> DatasetContainer:
    return DatasetContainer.from_bytes(Path(path).read_bytes())
