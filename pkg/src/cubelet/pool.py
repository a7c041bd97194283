"""Bulk-synchronous thread workers over contiguous block ranges.

Workers own disjoint slices of the leading (block) axis of the field arrays,
so compute phases write without any shared mutable state; every pool call is
a barrier.  Reductions happen per block and are combined in block order, so
results are bitwise identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_workers() -> int:
    env = os.environ.get("CUBELET_THREADS")
    if env:
        return max(1, int(env))
    return 1


class WorkerPool:
    def __init__(self, n_workers: int, n_blocks: int):
        self.n_workers = max(1, int(n_workers))
        self.n_blocks = n_blocks
        self.slices = self._split(n_blocks, self.n_workers)
        self._pool = (
            ThreadPoolExecutor(max_workers=self.n_workers) if self.n_workers > 1 else None
        )

    @staticmethod
    def _split(n: int, w: int) -> list[slice]:
        base, extra = divmod(n, w)
        out = []
        start = 0
        for i in range(w):
            size = base + (1 if i < extra else 0)
            out.append(slice(start, start + size))
            start += size
        return [s for s in out if s.stop > s.start]

    def run(self, fn, *args):
        """fn(block_slice, *args) for every slab; returns results in slab order."""
        if self._pool is None or len(self.slices) == 1:
            return [fn(s, *args) for s in self.slices]
        futures = [self._pool.submit(fn, s, *args) for s in self.slices]
        return [f.result() for f in futures]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
