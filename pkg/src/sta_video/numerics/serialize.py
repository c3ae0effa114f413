"""Tensor files: one JSON header line, then raw little-endian float64.

    {"shape":[2,3],"dtype":"f64"}\\n<48 bytes>
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import DataError


def tensor_to_bytes(arr) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    header = json.dumps({"shape": list(arr.shape), "dtype": "f64"}, separators=(",", ":"))
    return header.encode("ascii") + b"\n" + np.ascontiguousarray(arr).tobytes()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    head, sep, body = blob.partition(b"\n")
    if not sep:
        raise DataError("tensor blob has no header line")
    meta = json.loads(head)
    if meta.get("dtype") != "f64":
        raise DataError(f"unsupported dtype {meta.get('dtype')!r}")
    shape = tuple(int(n) for n in meta["shape"])
    expected = 8 * int(np.prod(shape, dtype=np.int64))
    if len(body) != expected:
        raise DataError(f"tensor body has {len(body)} bytes, header {shape} needs {expected}")
    return np.frombuffer(body, dtype="<f8").reshape(shape).astype(np.float64)


def save_tensor(path: str | os.PathLike, arr) -> None:
    Path(path).write_bytes(tensor_to_bytes(arr))


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())
