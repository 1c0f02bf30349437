"""Checkpoint files.

Layout::

    b"BIFASCKP" | uint64 LE header length | UTF-8 JSON header | payload

The header carries ``schema``, the sorted unique tensor ``names`` and per
tensor ``shape``, ``offset`` and ``nbytes`` into the payload, plus free-form
``config`` and ``meta`` objects. The payload is little-endian float32,
row-major, tensors back to back in name order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .tensor import Tensor

MAGIC = b"BIFASCKP"
SCHEMA_VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(Exception):
    code = "checkpoint_error"


class CorruptHeaderError(CheckpointError):
    code = "corrupt_header"


class ShapeMismatchError(CheckpointError):
    code = "shape_mismatch"


class TruncatedError(CheckpointError):
    code = "truncated"


def _arrays(params):
    return {k: (v.data if isinstance(v, Tensor) else np.asarray(v)) for k, v in params.items()}


def checkpoint_save(path, params, config=None, meta=None):
    arrays = _arrays(params)
    names = sorted(arrays)
    entries, blobs, offset = [], [], 0
    for name in names:
        a = arrays[name]
        if not np.all(np.isfinite(a)):
            raise ValueError(f"refusing to save non-finite parameter {name!r}")
        blob = np.ascontiguousarray(a, dtype=_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({
        "schema": SCHEMA_VERSION,
        "names": names,
        "tensors": entries,
        "config": config,
        "meta": meta or {},
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_header(raw):
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise CorruptHeaderError("missing checkpoint magic")
    (hlen,) = struct.unpack("<Q", raw[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if start + hlen > len(raw):
        raise CorruptHeaderError("header length exceeds file size")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeaderError(f"unreadable header: {exc}") from None
    if header.get("schema") != SCHEMA_VERSION:
        raise CorruptHeaderError(f"unsupported schema {header.get('schema')!r}")
    names = header.get("names")
    tensors = header.get("tensors")
    if not isinstance(names, list) or not isinstance(tensors, list):
        raise CorruptHeaderError("header lacks the names/tensors tables")
    if names != sorted(set(names)) or names != [t.get("name") for t in tensors]:
        raise CorruptHeaderError("tensor names must be sorted, unique and match the tensor table")
    return header, start + hlen


def checkpoint_load(path, expected=None):
    """Read a checkpoint; returns ``(arrays, header)``.

    With ``expected`` (a name -> tensor/array or name -> shape mapping) the
    name set and every shape are verified.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    header, base = read_header(raw)
    payload_len = len(raw) - base
    need = sum(t["nbytes"] for t in header["tensors"])
    if payload_len < need:
        raise TruncatedError(f"payload has {payload_len} bytes, header promises {need}")
    if payload_len > need:
        raise CorruptHeaderError(f"{payload_len - need} trailing bytes after payload")
    arrays = {}
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        if int(np.prod(shape)) * _DTYPE.itemsize != t["nbytes"]:
            raise CorruptHeaderError(f"byte count of {t['name']!r} does not match its shape")
        start = base + t["offset"]
        arrays[t["name"]] = np.frombuffer(raw, dtype=_DTYPE, count=int(np.prod(shape)),
                                          offset=start).reshape(shape).astype(np.float32)
    if expected is not None:
        want = {k: tuple(v.shape) if hasattr(v, "shape") else tuple(v) for k, v in expected.items()}
        if set(want) != set(arrays):
            missing = sorted(set(want) - set(arrays))
            extra = sorted(set(arrays) - set(want))
            raise ShapeMismatchError(f"name mismatch; missing {missing}, unexpected {extra}")
        for k, shape in want.items():
            if arrays[k].shape != shape:
                raise ShapeMismatchError(f"{k!r}: checkpoint {arrays[k].shape}, expected {shape}")
    return arrays, header


def params_from_arrays(arrays):
    return {k: Tensor(v, requires_grad=True, name=k, dtype=np.float32) for k, v in sorted(arrays.items())}
