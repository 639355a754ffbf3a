"""Seed discipline and small helpers shared by the calibrators."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(root: int, *labels) -> int:
    """Deterministic child seed from a root seed and a path of labels."""
    key = [zlib.crc32(str(lab).encode("utf-8")) for lab in labels]
    return int(np.random.SeedSequence(int(root), spawn_key=key).generate_state(1, dtype=np.uint32)[0])


def parallel_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> list[R]:
    """Ordered map; threads only when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def mae(a, b, weights: Sequence[float] | None = None) -> float:
    err = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if weights is None:
        return float(err.mean())
    w = np.asarray(weights, dtype=float)
    return float((w * err).sum() / w.sum())
