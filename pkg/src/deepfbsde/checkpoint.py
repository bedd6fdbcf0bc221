"""Flat binary checkpoints.

Layout, all little endian:

    bytes 0:8    magic b"DFBSDE01"
    bytes 8:16   uint64 header length H
    bytes 16:16+H  UTF-8 JSON manifest
    rest         concatenated float64 parameter data, C order

The manifest is {"meta": {...}, "params": [{"name", "shape", "offset"}, ...]}
with offsets in bytes from the start of the data section. Loading writes into
the existing Parameter arrays in place (shapes must match), so optimizer and
module references stay valid; round-trips are bit exact.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np

from .autodiff import Parameter
from .errors import CheckpointError

MAGIC = b"DFBSDE01"


def save_checkpoint(path: str | os.PathLike,
                    params: Iterable[Parameter], meta: dict | None = None) -> None:
    path = os.fspath(path)
    params = list(params)
    entries = []
    offset = 0
    blobs = []
    for p in params:
        # asarray keeps 0-d shapes, which ascontiguousarray would promote to 1-d
        a = np.asarray(p.value, dtype="<f8", order="C")
        entries.append({"name": p.name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    manifest = json.dumps({"meta": meta or {}, "params": entries}).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint64(len(manifest)).tobytes())
        f.write(manifest)
        for b in blobs:
            f.write(b)
    os.replace(tmp, path)


def read_manifest(path: str | os.PathLike) -> dict:
    try:
        f = open(path, "rb")
    except OSError as e:
        raise CheckpointError(f"{path}: cannot read checkpoint: {e}") from e
    with f:
        head = f.read(16)
        if len(head) < 16 or head[:8] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        hlen = int(np.frombuffer(head[8:16], dtype="<u8")[0])
        raw = f.read(hlen)
        if len(raw) < hlen:
            raise CheckpointError(f"{path}: truncated manifest")
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{path}: corrupt manifest: {e}") from e


def load_checkpoint(path: str, params: Iterable[Parameter]) -> dict:
    """Fill `params` from the file, matching by name; returns the meta dict."""
    params = list(params)
    manifest = read_manifest(path)
    by_name = {e["name"]: e for e in manifest["params"]}
    if len(by_name) != len(manifest["params"]):
        raise CheckpointError(f"{path}: duplicate parameter names")
    with open(path, "rb") as f:
        f.seek(8)
        hlen = int(np.frombuffer(f.read(8), dtype="<u8")[0])
        data_start = 16 + hlen
        f.seek(0, 2)
        fsize = f.tell()
        f.seek(data_start)
        blob = f.read()
    for p in params:
        e = by_name.pop(p.name, None)
        if e is None:
            raise CheckpointError(f"{path}: missing parameter {p.name!r}")
        shape = tuple(e["shape"])
        if shape != p.value.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {p.name!r}: file {shape}, net {p.value.shape}")
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        off = int(e["offset"])
        if off + 8 * n > fsize - data_start:
            raise CheckpointError(f"{path}: truncated data for {p.name!r}")
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
        p.value[...] = arr
    if by_name:
        extra = ", ".join(sorted(by_name))
        raise CheckpointError(f"{path}: file has parameters not in the net: {extra}")
    return manifest.get("meta", {})
