"""Counter-based derivation of independent random substreams.

Every stochastic step in the package draws from a generator keyed by a
master seed plus a tuple of integers (step, candidate, ...).  The stream a
computation sees therefore depends only on its coordinates, never on the
order in which work is scheduled.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Fixed purpose tags so that streams for different roles never collide.
TRUTH = 0
POOL = 1
POSTERIOR = 2
TRIPLES = 3
CANDIDATE = 4
OBSERVE = 5
REFERENCE = 6
SELECT = 7
CONTENT = 8


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream at ``key`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def content_key(row: np.ndarray) -> int:
    """Stable 63-bit key derived from the bytes of a float vector."""
    buf = np.ascontiguousarray(row, dtype="<f8").tobytes()
    return int.from_bytes(hashlib.blake2b(buf, digest_size=8).digest(), "little") >> 1


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from ``rng`` for deriving further substreams."""
    return int(rng.integers(0, 2**63 - 1))
