"""Deterministic fan-out of replicate work.

Results are always reduced in replicate-index order, so estimates are
bit-identical no matter how many workers run or how the scheduler interleaves
them; each replicate derives its own seed from (master seed, index).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def run_indexed(fn, n_items: int, workers: int = 1) -> list:
    """[fn(0), ..., fn(n_items-1)], optionally computed on a process pool."""
    if workers is None or workers <= 1 or n_items <= 1:
        return [fn(i) for i in range(n_items)]
    out = [None] * n_items
    with ProcessPoolExecutor(max_workers=min(workers, n_items)) as ex:
        futures = {ex.submit(fn, i): i for i in range(n_items)}
        for fut, idx in futures.items():
            out[idx] = fut.result()
    return out
