"""Container format for binary artifacts: a JSON header followed by raw arrays.

Layout: 8-byte magic ``HSGCN\\x00\\x01\\x00``, little-endian u64 header length,
UTF-8 JSON header, then the concatenated payload. The header lists each
array's name, dtype, shape and byte offset into the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from numpy.lib.format import descr_to_dtype, dtype_to_descr

MAGIC = b"HSGCN\x00\x01\x00"


class ArtifactError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _as_descr(d):
    # JSON turns descr tuples into lists
    if isinstance(d, list):
        return [tuple(f) for f in d]
    return d


def write_container(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    layout = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        if a.dtype.fields is None and a.dtype.itemsize > 1:
            a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes(order="C")
        layout.append({"name": name, "dtype": dtype_to_descr(a.dtype),
                       "shape": list(a.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    full = dict(header)
    full["arrays"] = layout
    head = canonical_json(full).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in chunks:
            fh.write(raw)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ArtifactError(f"{path}: not a hotspot_gcn artifact")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    arrays = {}
    for spec in header.pop("arrays"):
        dt = descr_to_dtype(_as_descr(spec["dtype"]))
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        start = base + spec["offset"]
        arr = np.frombuffer(data, dtype=dt, count=count, offset=start)
        arrays[spec["name"]] = arr.reshape(spec["shape"]).copy()
    return header, arrays
