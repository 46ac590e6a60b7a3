"""Chunked, seed-derived random streams.

``N`` draws are split into fixed chunks of ``CHUNK_SIZE``; chunk ``k`` uses
a generator seeded from ``SeedSequence(seed, spawn_key=(k,))``. Output is
therefore identical for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

CHUNK_SIZE = 1 << 16
THREADS_ENV = "COPULA_FORGE_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0")
    return n or (os.cpu_count() or 1)


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def run_chunked(N: int, seed: int, draw: Callable[[np.random.Generator, int], tuple]):
    """Call ``draw(rng, size)`` per chunk and concatenate each returned array."""
    if N < 1:
        raise ValueError("sample count must be >= 1")
    seed = check_seed(seed)
    sizes = [CHUNK_SIZE] * (N // CHUNK_SIZE)
    if N % CHUNK_SIZE:
        sizes.append(N % CHUNK_SIZE)

    def job(k):
        return draw(chunk_rng(seed, k), sizes[k])

    workers = min(worker_count(), len(sizes))
    if workers <= 1:
        parts = [job(k) for k in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    return tuple(np.concatenate(arrs) for arrs in zip(*parts))


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1): ``(k + 0.5) / 2**52``, exact in binary64."""
    return (rng.integers(0, 1 << 52, size=size, dtype=np.int64) + 0.5) / float(1 << 52)
