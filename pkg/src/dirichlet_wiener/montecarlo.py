"""Reproducible Monte Carlo plumbing.

Samples are processed in fixed-size blocks.  Every block draws from its own
Philox stream keyed by ``(seed, block, *extra)``, so results do not depend on
how many workers process the blocks or in which order they finish.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .basis import synthesize_values

BLOCK_SIZE = 8192


def block_rng(seed: int, block: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),) + tuple(int(e) for e in extra))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n_samples: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """``(block index, block length)`` pairs covering ``n_samples``."""
    out = []
    for b, start in enumerate(range(0, n_samples, block_size)):
        out.append((b, min(block_size, n_samples - start)))
    return out


def map_blocks(fn, n_samples: int, threads: int = 1, block_size: int = BLOCK_SIZE) -> list:
    """Apply ``fn(block, size)`` to every block; results come back in block order."""
    work = blocks(n_samples, block_size)
    if threads <= 1 or len(work) == 1:
        return [fn(b, size) for b, size in work]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda bs: fn(*bs), work))


def brownian_values(rng: np.random.Generator, size: int, grid_level: int, d: int = 1) -> np.ndarray:
    """Grid values of ``size`` Brownian paths, synthesized from i.i.d.
    standard normal Wiener coordinates."""
    coeffs = rng.standard_normal((size, d << grid_level))
    return synthesize_values(coeffs, grid_level, d)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        se = float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return cls(float(np.mean(x)), se, n)

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.value - target) <= n_se * self.stderr

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n}
