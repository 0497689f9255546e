"""HPF1 binary arrays and manifest bundles.

Layout of one file::

    b"HPF1" | uint32 rank | uint32 dim0 | uint32 dim1 | float64 payload

All integers and floats are little-endian. Complex arrays set
``COMPLEX_FLAG`` in the rank word and store interleaved ``(re, im)`` pairs.
Rank 0 stores ``dim0 = dim1 = 1``; rank 1 stores ``dim1 = 1``.

A bundle is a directory holding ``manifest.json`` plus one ``.hpf`` file per
array.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HPF1"
COMPLEX_FLAG = 0x80000000
_HEADER = struct.Struct("<4sIII")


def encode(arr) -> bytes:
    a = np.asarray(arr)
    if a.ndim > 2:
        raise ValueError(f"HPF1 stores at most rank-2 arrays, got rank {a.ndim}")
    rank = a.ndim
    dim0 = a.shape[0] if rank >= 1 else 1
    dim1 = a.shape[1] if rank == 2 else 1
    if np.iscomplexobj(a):
        flag = COMPLEX_FLAG
        payload = np.ascontiguousarray(a, dtype="<c16").view("<f8")
    else:
        flag = 0
        payload = np.ascontiguousarray(a, dtype="<f8")
    return _HEADER.pack(MAGIC, rank | flag, dim0, dim1) + payload.tobytes()


def decode(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated HPF1 header")
    magic, rank_word, dim0, dim1 = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    is_complex = bool(rank_word & COMPLEX_FLAG)
    rank = rank_word & ~COMPLEX_FLAG
    if rank > 2:
        raise ValueError(f"unsupported rank {rank}")
    count = dim0 * dim1 * (2 if is_complex else 1)
    expected = _HEADER.size + 8 * count
    if len(buf) != expected:
        raise ValueError(f"payload size {len(buf)} != expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size, count=count).astype(np.float64)
    if is_complex:
        data = data.view(np.complex128)
    shape = {0: (), 1: (dim0,), 2: (dim0, dim1)}[rank]
    return data.reshape(shape).copy()


def write_array(path, arr) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(arr))
    os.replace(tmp, path)


def read_array(path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def write_bundle(directory, arrays: dict, manifest: dict) -> Path:
    """Write ``arrays`` (name -> array) and a JSON manifest into ``directory``.

    The manifest gains a ``files`` entry mapping names to file names.
    Output is deterministic for identical inputs.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in sorted(arrays):
        fname = f"{name}.hpf"
        write_array(directory / fname, arrays[name])
        files[name] = fname
    man = dict(manifest)
    man["files"] = files
    (directory / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return directory


def read_bundle(directory) -> tuple[dict, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    arrays = {name: read_array(directory / fname) for name, fname in manifest["files"].items()}
    return arrays, manifest
