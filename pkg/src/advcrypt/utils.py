"""Hashing, canonical serialization, and determinism helpers."""

import hashlib
import json

import numpy as np
import torch


def canonical_json(obj) -> str:
    """Serialize to JSON with a stable key order and no whitespace variance."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(obj) -> str:
    """Content digest of any JSON-serializable object."""
    return sha256_hex(canonical_json(obj).encode("utf-8"))


def array_digest(*arrays: np.ndarray) -> str:
    """Digest over the raw little-endian bytes of one or more arrays."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        if a.dtype.byteorder == ">":
            a = a.astype(a.dtype.newbyteorder("<"))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def set_deterministic() -> None:
    """Force deterministic kernels. Required for reproducible encryption runs."""
    torch.use_deterministic_algorithms(True)
