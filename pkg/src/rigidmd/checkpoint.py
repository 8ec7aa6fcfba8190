"""Versioned binary container for restart data.

Byte layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"RMDCKPT\\0"
    8       4     uint32 format_version (currently 1)
    12      8     uint64 payload length P
    20      4     uint32 CRC-32 of the payload
    24      P     payload: a sequence of records

    record:
      uint16  name length, then the UTF-8 name
      uint8   type code: 'f' float64, 'i' int64, 'b' bool (1 byte each), 's' UTF-8 text
      uint8   ndim (0 for text)
      uint64  shape[k] for each dimension
      uint64  data length D, then D bytes (C order)

Nested state is flattened into ``/``-separated record names.
"""

import struct
import zlib

import numpy as np

from .errors import CheckpointError

MAGIC = b"RMDCKPT\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQI")


def _encode(name, value):
    key = name.encode("utf-8")
    if isinstance(value, str):
        data = value.encode("utf-8")
        return struct.pack("<H", len(key)) + key + b"s" + struct.pack("<BQ", 0, len(data)) + data
    arr = np.asarray(value)
    if arr.dtype == bool:
        code, arr = b"b", arr.astype(np.uint8)
    elif np.issubdtype(arr.dtype, np.integer):
        code, arr = b"i", arr.astype("<i8")
    elif np.issubdtype(arr.dtype, np.floating):
        code, arr = b"f", arr.astype("<f8")
    else:
        raise CheckpointError(f"cannot serialise {name!r} of dtype {arr.dtype}")
    data = np.ascontiguousarray(arr).tobytes()
    head = struct.pack("<H", len(key)) + key + code + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return head + struct.pack("<Q", len(data)) + data


def pack(records):
    """Serialise a flat mapping of names to arrays, numbers or strings."""
    payload = b"".join(_encode(k, v) for k, v in records.items())
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(payload), zlib.crc32(payload)) + payload


def unpack(blob):
    if len(blob) < _HEADER.size:
        raise CheckpointError("checkpoint truncated: incomplete header")
    magic, version, length, crc = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    payload = blob[_HEADER.size :]
    if length != len(payload):
        raise CheckpointError(f"checkpoint length field says {length} bytes, found {len(payload)}")
    if zlib.crc32(payload) != crc:
        raise CheckpointError("checkpoint payload checksum mismatch")
    out = {}
    pos = 0
    try:
        while pos < len(payload):
            (nlen,) = struct.unpack_from("<H", payload, pos)
            pos += 2
            name = payload[pos : pos + nlen].decode("utf-8")
            pos += nlen
            code = payload[pos : pos + 1]
            (ndim,) = struct.unpack_from("<B", payload, pos + 1)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}Q", payload, pos) if ndim else ()
            pos += 8 * ndim
            (dlen,) = struct.unpack_from("<Q", payload, pos)
            pos += 8
            data = payload[pos : pos + dlen]
            if len(data) != dlen:
                raise CheckpointError(f"record {name!r} truncated")
            pos += dlen
            if code == b"s":
                out[name] = data.decode("utf-8")
            elif code in (b"f", b"i", b"b"):
                dtype = {b"f": "<f8", b"i": "<i8", b"b": np.uint8}[code]
                arr = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
                out[name] = arr.astype(bool) if code == b"b" else arr.astype(arr.dtype.newbyteorder("="))
            else:
                raise CheckpointError(f"record {name!r} has unknown type code {code!r}")
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint payload: {exc}") from None
    return out


def nest(prefix, records):
    return {f"{prefix}/{k}": v for k, v in records.items()}


def sub(records, prefix):
    p = prefix + "/"
    return {k[len(p) :]: v for k, v in records.items() if k.startswith(p)}
