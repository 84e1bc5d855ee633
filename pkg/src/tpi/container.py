"""Binary container for tensors and matrices, with a JSON sidecar.

Layout (all little-endian):

    offset 0   magic   4 bytes  b"TPI3"
    offset 4   version u8       (currently 1)
    offset 5   kind    u8       1 = dense, 2 = factored, 3 = matrix
    offset 6   reserved u16     0
    offset 8   d       u32
    offset 12  k       u32      (0 for dense; columns for matrix)
    offset 16  payload f64[]

Payloads: dense = d**3 entries with (i, j, l) at offset i*d*d + j*d + l;
factored = k weights then the d x k component matrix in column-major order;
matrix = d x k entries column-major.  A sidecar ``<path>.json`` carries
free-form metadata (seed, config hash, flags).
"""

import json
import struct

import numpy as np

from .errors import InvalidArgumentError
from .tensors import DenseTensor3, FactoredTensor3

MAGIC = b"TPI3"
VERSION = 1
KIND_DENSE = 1
KIND_FACTORED = 2
KIND_MATRIX = 3

_HEADER = struct.Struct("<4sBBHII")


def _write(path, kind, d, k, payload, meta):
    payload = np.ascontiguousarray(payload, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, 0, d, k))
        fh.write(payload.tobytes())
    if meta is not None:
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _read_header(fh, path):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated header")
    magic, version, kind, _reserved, d, k = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise InvalidArgumentError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise InvalidArgumentError(f"{path}: unsupported version {version}")
    return kind, d, k


def save_tensor(path, tensor, meta=None):
    """Write a DenseTensor3 or symmetric FactoredTensor3 to ``path``."""
    if isinstance(tensor, DenseTensor3):
        base = dict(meta or {})
        base.setdefault("symmetric", tensor.symmetric)
        _write(path, KIND_DENSE, tensor.dim, 0, tensor.entries.ravel(), base)
    elif isinstance(tensor, FactoredTensor3):
        if not tensor.is_symmetric:
            raise InvalidArgumentError("container stores symmetric factored tensors only")
        payload = np.concatenate([tensor.weights, tensor.components.ravel(order="F")])
        _write(path, KIND_FACTORED, tensor.dim, tensor.rank, payload, meta)
    else:
        raise InvalidArgumentError(f"cannot save {type(tensor).__name__}")


def load_tensor(path):
    """Read a tensor container; returns (tensor, meta_dict_or_None)."""
    with open(path, "rb") as fh:
        kind, d, k = _read_header(fh, path)
        data = np.frombuffer(fh.read(), dtype="<f8")
    meta = _load_meta(path)
    if kind == KIND_DENSE:
        if data.size != d**3:
            raise InvalidArgumentError(f"{path}: expected {d**3} entries, got {data.size}")
        symmetric = bool(meta.get("symmetric", False)) if meta else False
        return DenseTensor3(data.reshape(d, d, d), symmetric=symmetric, check=False), meta
    if kind == KIND_FACTORED:
        if data.size != k + d * k:
            raise InvalidArgumentError(f"{path}: bad factored payload size {data.size}")
        weights = data[:k]
        comps = data[k:].reshape(d, k, order="F")
        return FactoredTensor3(comps, weights), meta
    if kind == KIND_MATRIX:
        raise InvalidArgumentError(f"{path}: matrix container; use load_matrix")
    raise InvalidArgumentError(f"{path}: unknown kind {kind}")


def save_matrix(path, M, meta=None):
    """Write a 2-d array as the container's matrix variant."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InvalidArgumentError("save_matrix expects a 2-d array")
    _write(path, KIND_MATRIX, M.shape[0], M.shape[1], M.ravel(order="F"), meta)


def load_matrix(path):
    with open(path, "rb") as fh:
        kind, d, k = _read_header(fh, path)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if kind != KIND_MATRIX:
        raise InvalidArgumentError(f"{path}: not a matrix container (kind {kind})")
    if data.size != d * k:
        raise InvalidArgumentError(f"{path}: bad matrix payload size {data.size}")
    return data.reshape(d, k, order="F").copy(), _load_meta(path)


def _load_meta(path):
    try:
        with open(str(path) + ".json") as fh:
            return json.load(fh)
    except FileNotFoundError:
        return None
