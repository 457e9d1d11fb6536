"""Binary dataset/truth files and small text/array dumps.

Layout (all little-endian):

    magic   4 bytes  b"MTPR" (dataset) or b"MTPT" (truth)
    version u32
    d, n_pub, n_priv, k_pub, k_priv, m   u64 each
    payload float64 / uint64 arrays, row-major
    footer  u64 BLAKE2b-64 digest of the payload

Dataset payload: public view (d x n_pub) then images (m x d).
Truth payload: full image matrix (d x n), then for every selection vector
its k_pub + k_priv support indices (u64) and its two weights (f64).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    FormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .model import ImageMatrix, ModelParams, OverlapMatrix, SelectionVector, SyntheticDataset

DATASET_MAGIC = b"MTPR"
TRUTH_MAGIC = b"MTPT"
VERSION = 1
_HEADER = struct.Struct("<4sI6Q")
_FOOTER = struct.Struct("<Q")


def _digest(chunks) -> int:
    h = hashlib.blake2b(digest_size=8)
    for c in chunks:
        h.update(c)
    return int.from_bytes(h.digest(), "little")


def _le(a: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(a, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()


def _header(magic: bytes, p: ModelParams) -> bytes:
    return _HEADER.pack(magic, VERSION, p.d, p.n_pub, p.n_priv, p.k_pub, p.k_priv, p.m)


def _write(path, magic, params, chunks):
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_header(magic, params))
        for c in chunks:
            f.write(c)
        f.write(_FOOTER.pack(_digest(chunks)))


def _payload_size(magic: bytes, p: ModelParams) -> int:
    if magic == DATASET_MAGIC:
        return 8 * (p.d * p.n_pub + p.m * p.d)
    return 8 * (p.d * p.n + p.m * (p.k_pub + p.k_priv + 2))


def _read(path, magic: bytes, seed: int = 0):
    path = Path(path)
    size = os.stat(path).st_size
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise TruncatedFileError(f"{path}: file shorter than the {_HEADER.size}-byte header")
        got, version, d, n_pub, n_priv, k_pub, k_priv, m = _HEADER.unpack(raw)
        if got != magic:
            raise BadMagicError(f"{path}: bad magic {got!r}, expected {magic!r}")
        if version != VERSION:
            raise UnsupportedVersionError(f"{path}: format version {version} is not supported")
        params = ModelParams(d, n_pub, n_priv, k_pub, k_priv, m, seed)
        expected = _HEADER.size + _payload_size(magic, params) + _FOOTER.size
        if size < expected:
            raise TruncatedFileError(f"{path}: header implies {expected} bytes but file has {size}")
        if size > expected:
            raise FormatError(f"{path}: {size - expected} trailing bytes after the footer")
        payload = f.read(_payload_size(magic, params))
        (check,) = _FOOTER.unpack(f.read(_FOOTER.size))
    if _digest([payload]) != check:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    return params, payload


def write_dataset(path, ds: SyntheticDataset) -> None:
    _write(path, DATASET_MAGIC, ds.params, [_le(ds.public_view, "f8"), _le(ds.images, "f8")])


def read_dataset(path) -> SyntheticDataset:
    p, payload = _read(path, DATASET_MAGIC)
    buf = np.frombuffer(payload, dtype="<f8")
    cut = p.d * p.n_pub
    public = buf[:cut].reshape(p.d, p.n_pub).astype(float)
    images = buf[cut:].reshape(p.m, p.d).astype(float)
    return SyntheticDataset(images=images, public_view=public, params=p)


def write_truth(path, truth: ImageMatrix, selections, params: ModelParams) -> None:
    supports = np.array([list(w.support) for w in selections], dtype=np.uint64).reshape(params.m, -1)
    weights = np.array([[w.weight_pub, w.weight_priv] for w in selections], dtype=float).reshape(params.m, 2)
    _write(path, TRUTH_MAGIC, params, [_le(truth.entries, "f8"), _le(supports, "u8"), _le(weights, "f8")])


def read_truth(path) -> tuple[ImageMatrix, list[SelectionVector], ModelParams]:
    p, payload = _read(path, TRUTH_MAGIC)
    k = p.k_pub + p.k_priv
    a = 8 * p.d * p.n
    b = a + 8 * p.m * k
    X = np.frombuffer(payload[:a], dtype="<f8").reshape(p.d, p.n).astype(float)
    S = np.frombuffer(payload[a:b], dtype="<u8").reshape(p.m, k).astype(np.int64)
    Wt = np.frombuffer(payload[b:], dtype="<f8").reshape(p.m, 2).astype(float)
    ws = [
        SelectionVector(tuple(map(int, s[: p.k_pub])), tuple(map(int, s[p.k_pub :])), float(w[0]), float(w[1]))
        for s, w in zip(S, Wt)
    ]
    return ImageMatrix(X, p.n_pub), ws, p


def save_overlap(path, M: OverlapMatrix) -> None:
    with open(path, "wb") as f:
        np.savez(f, entries=M.entries, grid=np.int64(M.grid))


def load_overlap(path) -> OverlapMatrix:
    try:
        with np.load(path) as z:
            return OverlapMatrix(z["entries"].astype(np.int64), int(z["grid"])).validate()
    except (KeyError, ValueError, OSError) as err:
        raise FormatError(f"{path}: not an overlap-matrix dump ({err})") from err


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: malformed JSON ({err})") from err
