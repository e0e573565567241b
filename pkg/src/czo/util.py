"""Small shared helpers: chunking, deterministic threading, point coercion."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Sampling truncation for unbounded domains.
BOUNDING_HALF_WIDTH = 32.0


def get_threads(threads: int | None = None) -> int:
    if threads is not None and threads > 0:
        return threads
    env = os.environ.get("CZO_THREADS", "")
    if env.strip().isdigit() and int(env) > 0:
        return int(env)
    return 1


def chunk_ranges(total: int, chunk: int):
    """Yield (start, stop) pairs covering range(total) in fixed-size chunks.

    Chunk boundaries depend only on `total` and `chunk`, never on the thread
    count, so parallel maps over chunks merge deterministically.
    """
    for start in range(0, total, chunk):
        yield start, min(start + chunk, total)


def pmap_chunks(fn, total: int, chunk: int, threads: int = 1):
    """Apply fn(start, stop) over fixed chunks, concatenating results in order."""
    ranges = list(chunk_ranges(total, chunk))
    if threads <= 1 or len(ranges) <= 1:
        parts = [fn(a, b) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: fn(*r), ranges))
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def as_points(x, dim: int) -> np.ndarray:
    """Coerce scalars / vectors / arrays of vectors to shape (m, dim).

    Raises on NaN or infinity: every geometric point in this library must be
    finite.
    """
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        if dim == 1:
            a = a.reshape(-1, 1)
        else:
            if a.shape[0] != dim:
                raise ValueError(f"expected a point in R^{dim}, got shape {a.shape}")
            a = a.reshape(1, dim)
    if a.ndim != 2 or a.shape[1] != dim:
        raise ValueError(f"expected points in R^{dim}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("points must be finite (no NaN/inf)")
    return a


def fold_mirror_sum(w: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along an axis after pairing each entry with its mirror.

    This is a plain regrouping of the sum; it makes integrals of exactly
    antisymmetric integrands on symmetric grids cancel bitwise.
    """
    w = np.moveaxis(w, axis, -1)
    m = w.shape[-1]
    half = m // 2
    rev = w[..., ::-1]
    pairs = w[..., :half] + rev[..., :half]
    total = np.sum(pairs, axis=-1)
    if m % 2 == 1:
        total = total + w[..., half]
    return total
