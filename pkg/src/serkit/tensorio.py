"""Binary tensor files ("SERT") and the named-tensor checkpoint container.

SERT layout (all little-endian)::

    b"SERT" | u32 version=1 | u8 dtype | u32 ndim | ndim x u64 dims | payload

dtype 1 is float32. dtype 2 (float64) is an extension used for parameters
that must round-trip exactly, such as SVM support vectors.

The checkpoint container is::

    b"SERC" | u32 version=1 | u64 header_len | header (UTF-8) | payload

where the header holds ``key=value`` descriptor lines, a blank line, then an
index of ``name,offset,length`` lines addressing SERT blobs in the payload.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .errors import MalformedContainer, UnsupportedEncoding

SERT_MAGIC = b"SERT"
SERT_VERSION = 1
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}

CKPT_MAGIC = b"SERC"
CKPT_VERSION = 1
INDEX_HEADER = "name,offset,length"


def tensor_to_bytes(array, dtype="float32") -> bytes:
    arr = np.ascontiguousarray(np.asarray(array, dtype=np.dtype(dtype).newbyteorder("<")))
    code = _CODE_FOR.get(arr.dtype)
    if code is None:
        raise UnsupportedEncoding(f"cannot store dtype {arr.dtype}")
    if arr.ndim == 0:
        arr = arr.reshape(1)
    head = SERT_MAGIC + struct.pack("<IBI", SERT_VERSION, code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < 13 or blob[:4] != SERT_MAGIC:
        raise MalformedContainer("bad SERT magic")
    version, code, ndim = struct.unpack("<IBI", blob[4:13])
    if version != SERT_VERSION:
        raise MalformedContainer(f"unsupported SERT version {version}")
    if code not in DTYPE_CODES:
        raise UnsupportedEncoding(f"unknown SERT dtype code {code}")
    end = 13 + 8 * ndim
    if len(blob) < end:
        raise MalformedContainer("truncated SERT dims")
    dims = struct.unpack(f"<{ndim}Q", blob[13:end])
    dtype = DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(blob) != end + count * dtype.itemsize:
        raise MalformedContainer("SERT payload size does not match dims")
    return np.frombuffer(blob, dtype=dtype, count=count, offset=end).reshape(dims).copy()


def save_tensor(path, array, dtype="float32") -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(tensor_to_bytes(array, dtype))


def load_tensor(path) -> np.ndarray:
    with open(os.fspath(path), "rb") as fh:
        return tensor_from_bytes(fh.read())


def save_container(path, tensors, descriptor=None, dtype="float32") -> None:
    """Write ``tensors`` (name -> array) plus a text descriptor.

    ``dtype`` may be a single dtype or a dict mapping names to dtypes.
    """
    descriptor = descriptor or {}
    payload = io.BytesIO()
    index = []
    for name, arr in tensors.items():
        if "," in name or "\n" in name:
            raise ValueError(f"tensor name {name!r} contains a separator")
        dt = dtype.get(name, "float32") if isinstance(dtype, dict) else dtype
        blob = tensor_to_bytes(arr, dt)
        index.append(f"{name},{payload.tell()},{len(blob)}")
        payload.write(blob)
    lines = []
    for key, value in descriptor.items():
        text = str(value)
        if "=" in key or "\n" in key or "\n" in text:
            raise ValueError(f"descriptor entry {key!r} is not a single line")
        lines.append(f"{key}={text}")
    header = "\n".join(lines) + "\n\n" + INDEX_HEADER + "\n" + "\n".join(index) + "\n"
    head = header.encode("utf-8")
    with open(os.fspath(path), "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<IQ", CKPT_VERSION, len(head)))
        fh.write(head)
        fh.write(payload.getvalue())


def load_container(path):
    """Return ``(tensors, descriptor)``; tensors keep the file's order."""
    with open(os.fspath(path), "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != CKPT_MAGIC:
        raise MalformedContainer("bad checkpoint magic")
    version, head_len = struct.unpack("<IQ", data[4:16])
    if version != CKPT_VERSION:
        raise MalformedContainer(f"unsupported checkpoint version {version}")
    if 16 + head_len > len(data):
        raise MalformedContainer("checkpoint header truncated")
    header = data[16:16 + head_len].decode("utf-8")
    base = 16 + head_len
    desc_text, sep, index_text = header.partition("\n\n")
    if not sep:
        raise MalformedContainer("checkpoint header lacks index section")
    descriptor = {}
    for line in desc_text.splitlines():
        if line:
            key, _, value = line.partition("=")
            descriptor[key] = value
    index_lines = [ln for ln in index_text.splitlines() if ln]
    if not index_lines or index_lines[0] != INDEX_HEADER:
        raise MalformedContainer("checkpoint index header missing")
    tensors = {}
    for line in index_lines[1:]:
        name, offset, length = line.rsplit(",", 2)
        start = base + int(offset)
        stop = start + int(length)
        if stop > len(data):
            raise MalformedContainer(f"tensor {name!r} extends past end of file")
        tensors[name] = tensor_from_bytes(data[start:stop])
    return tensors, descriptor
