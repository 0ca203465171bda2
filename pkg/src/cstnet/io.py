"""Binary tensor files and the checkpoint container.

Tensor file ("CSTT", one array per file):

    bytes 0..3   magic b"CSTT"
    bytes 4..5   format version, u16 little-endian (currently 1)
    byte  6      dtype tag: 1 = float32, 2 = float64
    byte  7      rank r
    next 8*r     extents, u64 little-endian each
    rest         raw element bytes, little-endian, C order

Checkpoint file ("CSTC"): a config echo plus named tensors.

    bytes 0..3   magic b"CSTC"
    bytes 4..5   format version, u16 little-endian (currently 1)
    u32          length of the UTF-8 JSON config echo, then the echo
    u32          tensor count n
    n records    u16 name length, name UTF-8, then a CSTT-style payload
                 (dtype tag, rank, extents, raw values) without magic/version

Tensors are written sorted by name so identical states serialize to
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

TENSOR_MAGIC = b"CSTT"
CHECKPOINT_MAGIC = b"CSTC"
FORMAT_VERSION = 1

_DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAGS_BY_KIND = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


def _dtype_tag(arr: np.ndarray) -> int:
    tag = _TAGS_BY_KIND.get(arr.dtype.newbyteorder("="))
    if tag is None:
        raise FormatError(f"unsupported dtype {arr.dtype} (float32/float64 only)")
    return tag


def _pack_array(arr: np.ndarray) -> bytes:
    tag = _dtype_tag(arr)
    parts = [struct.pack("<BB", tag, arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
    parts.append(np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.name = name
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"{self.name}: truncated while reading {what} "
                              f"at offset {self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack_array(self) -> np.ndarray:
        tag, rank = struct.unpack("<BB", self.take(2, "dtype/rank header"))
        if tag not in _DTYPE_TAGS:
            raise FormatError(f"{self.name}: unknown dtype tag {tag} at offset {self.offset - 2}")
        shape = struct.unpack(f"<{rank}Q", self.take(8 * rank, "extents")) if rank else ()
        dtype = _DTYPE_TAGS[tag]
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(count * dtype.itemsize, "tensor values")
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def write_tensor(path, arr: np.ndarray):
    payload = TENSOR_MAGIC + struct.pack("<H", FORMAT_VERSION) + _pack_array(arr)
    Path(path).write_bytes(payload)


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    reader = _Reader(path.read_bytes(), str(path))
    magic = reader.take(4, "magic")
    if magic != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    (version,) = struct.unpack("<H", reader.take(2, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at offset 4")
    arr = reader.unpack_array()
    if reader.offset != len(reader.data):
        raise FormatError(f"{path}: {len(reader.data) - reader.offset} trailing bytes "
                          f"at offset {reader.offset}")
    return arr


def write_checkpoint(path, config: dict, state: dict[str, np.ndarray]):
    echo = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<H", FORMAT_VERSION),
             struct.pack("<I", len(echo)), echo, struct.pack("<I", len(state))]
    for name in sorted(state):
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(_pack_array(state[name]))
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    reader = _Reader(path.read_bytes(), str(path))
    magic = reader.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    (version,) = struct.unpack("<H", reader.take(2, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at offset 4")
    (echo_len,) = struct.unpack("<I", reader.take(4, "config length"))
    try:
        config = json.loads(reader.take(echo_len, "config echo").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt config echo ({exc})") from None
    (count,) = struct.unpack("<I", reader.take(4, "tensor count"))
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", reader.take(2, "name length"))
        name = reader.take(name_len, "tensor name").decode("utf-8")
        state[name] = reader.unpack_array()
    if reader.offset != len(reader.data):
        raise FormatError(f"{path}: {len(reader.data) - reader.offset} trailing bytes "
                          f"at offset {reader.offset}")
    return config, state
