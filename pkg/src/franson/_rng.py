"""Named, seed-derived random substreams.

Every stochastic subsystem draws from its own substream so that, e.g.,
changing the detector jitter never perturbs which outcomes were sampled.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "pairs": 1,
    "outcomes": 2,
    "ll_bit": 3,
    "jitter": 4,
    "efficiency": 5,
    "darks": 6,
}

# Pairs are generated in fixed-size chunks, each with its own substream, so the
# output never depends on how the work is split.
CHUNK = 1 << 18


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown substream {name!r}")
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=(STREAMS[name], *map(int, keys)))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_bounds(n: int):
    for k, start in enumerate(range(0, n, CHUNK)):
        yield k, start, min(start + CHUNK, n)
