"""Artifact writers: CSV tables, JSON manifests, and PGM images.

Every CLI run drops a manifest next to its outputs recording the resolved
configuration, the seed, the toolkit version, and a content hash, so an
artifact can always be traced back to the exact invocation that made it.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(_plain(v) for v in row)
    return path


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and obj != obj:  # NaN
        return None
    return obj


def content_hash(payload) -> str:
    return hashlib.sha256(
        json.dumps(_jsonable(payload), sort_keys=True).encode()
    ).hexdigest()


def write_manifest(path, config: dict, seed) -> Path:
    payload = {
        "toolkit_version": __version__,
        "seed": seed,
        "config": config,
        "content_hash": content_hash({"config": config, "seed": seed}),
    }
    return write_json(path, payload)


def write_pgm(path, values: np.ndarray, bits: int = 8) -> Path:
    """Write a [0, 1] float map as a binary PGM (8- or 16-bit, big-endian)."""
    if bits not in (8, 16):
        raise ConfigError("PGM depth must be 8 or 16 bits")
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ConfigError("PGM input must be a 2-D array")
    if np.any(arr < -1e-9) or np.any(arr > 1 + 1e-9):
        raise ConfigError("PGM input must lie in [0, 1]")
    maxval = (1 << bits) - 1
    q = np.rint(np.clip(arr, 0.0, 1.0) * maxval)
    q = q.astype(">u2" if bits == 16 else "u1")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode())
        fh.write(q.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM back into a float map in [0, 1]."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ConfigError(f"{path}: not a binary PGM")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(fh.read(), dtype=dtype, count=width * height)
    return data.reshape(height, width).astype(float) / maxval
