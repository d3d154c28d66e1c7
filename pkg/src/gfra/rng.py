"""Named random streams derived from a single master seed.

Every source of randomness in a run (user placement, fading, arrivals,
action sampling, training) gets its own independent stream keyed by a
stable string, so ablations can perturb one source without disturbing the
others. Keys may also carry integer indices (epoch, episode) so episodes
can be generated independently and in parallel.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAMS = ("placement", "fading", "arrivals", "actions", "training", "init")


def _key_id(name: str) -> int:
    # stable across interpreter runs, unlike hash()
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def stream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return the generator for (seed, name, indices...), deterministically."""
    return np.random.default_rng(np.random.SeedSequence((seed, _key_id(name)) + tuple(indices)))


def torch_seed(seed: int, name: str, *indices: int) -> int:
    """A 63-bit seed for torch derived from the same keyed scheme."""
    h = hashlib.sha256(f"{seed}/{name}/{indices}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1
