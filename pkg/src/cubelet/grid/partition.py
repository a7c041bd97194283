"""Deterministic cube-to-worker assignment.

Cubes are already id-ordered along a Morton space-filling curve of their
origins, so contiguous id ranges are spatially compact.  Workers receive
floor(N/w) or ceil(N/w) cubes; the assignment depends only on (grid, n_workers).
"""

from __future__ import annotations

import warnings

import numpy as np

from .core import CubeGrid


def partition(grid: CubeGrid, n_workers: int) -> np.ndarray:
    """Worker id per cube; balanced to within one cube."""
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    n = grid.n_cubes
    if n_workers > n:
        warnings.warn(
            f"{n_workers} workers for {n} cubes; {n_workers - n} workers stay idle",
            stacklevel=2,
        )
    counts = np.full(n_workers, n // n_workers, dtype=np.int64)
    counts[: n % n_workers] += 1
    owner = np.repeat(np.arange(n_workers, dtype=np.int64), counts)
    return owner


def worker_slices(grid: CubeGrid, n_workers: int) -> list[slice]:
    """Contiguous cube-id slices per worker (empty slices for idle workers)."""
    owner = partition(grid, n_workers)
    out = []
    for w in range(n_workers):
        idx = np.nonzero(owner == w)[0]
        if len(idx) == 0:
            out.append(slice(0, 0))
        else:
            out.append(slice(int(idx[0]), int(idx[-1]) + 1))
    return out
