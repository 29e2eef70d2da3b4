"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from a path of
integers (global seed, purpose tag, vertex coordinates, resample index). A
stream depends only on its path, so results do not depend on the order in
which vertices or samples are processed, nor on the number of workers.
"""
from __future__ import annotations

import numpy as np

# purpose tags
DISORDER = 1
RESAMPLE = 2
SWEEP = 3
COUPLING = 4
MISC = 5

_OFFSET = 2 ** 31


def _words(path):
    out = []
    for p in path:
        p = int(p)
        if p < 0:
            p += 2 ** 64
        out.append(p & 0xFFFFFFFF)
        out.append(p >> 32)
    return out


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator keyed by (seed, *path)."""
    ss = np.random.SeedSequence(_words((seed,) + path))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def vertex_stream(seed: int, tag: int, coords, resample: int = 0) -> np.random.Generator:
    """Stream for one lattice vertex; coordinates may be negative."""
    c = [int(x) + _OFFSET for x in np.atleast_1d(coords)]
    return stream(seed, tag, len(c), *c, resample)


def child_seed(seed: int, *path: int) -> int:
    """A derived 63-bit integer seed."""
    ss = np.random.SeedSequence(_words((seed,) + path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
