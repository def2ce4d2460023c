"""Seed derivation.

All sampling uses numpy's ``PCG64`` bit generator, whose output stream is
fixed by the seed and identical across platforms. A run is driven by one
integer seed; independent streams for different modules and replications
are derived from it as::

    blake2b(f"{seed}:{stream}:{index}", digest_size=8)  ->  uint64

so that ``derive_seed(seed, "estimators", 3)`` is a stable, documented
function of its arguments.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, stream: str, index: int = 0) -> int:
    token = f"{int(seed)}:{stream}:{int(index)}".encode("ascii")
    return int.from_bytes(hashlib.blake2b(token, digest_size=8).digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    return make_rng(derive_seed(seed, stream, index))
