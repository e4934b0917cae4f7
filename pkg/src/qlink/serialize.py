"""JSON helpers: complex arrays as [re, im] pairs, canonical dumps, atomic writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

__all__ = [
    "cplx_to_pairs",
    "pairs_to_cplx",
    "canonical_json",
    "config_hash",
    "atomic_write_text",
]


def cplx_to_pairs(arr) -> list:
    """Complex ndarray -> nested lists with each scalar as [re, im]."""
    a = np.asarray(arr, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def pairs_to_cplx(data) -> np.ndarray:
    """Inverse of :func:`cplx_to_pairs`."""
    a = np.asarray(data, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError("expected [re, im] pairs on the last axis")
    return a[..., 0] + 1j * a[..., 1]


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, tight separators, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON encoding of a config dict."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
