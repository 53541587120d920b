"""Named RNG substreams derived from one master seed.

Every random consumer asks for ``substream(seed, name, *index)`` so that, e.g.,
the paired diff-on/diff-off training runs share data and initialisation, and
batch units can run in any order without changing results.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode())


def substream(master_seed: int, name: str, *index: int) -> np.random.Generator:
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, stream_key(name), *(int(i) for i in index)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
