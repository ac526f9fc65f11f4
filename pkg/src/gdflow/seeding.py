"""Named substreams derived from one root seed.

All randomness in the package flows from a single root seed through named
streams, so adding a policy to a comparison or reordering work never
perturbs the user sequences already assigned to other episodes.
"""

from __future__ import annotations

import zlib

import numpy as np

# Stream kind tags; part of the reproducibility contract.
GEN_STREAM = 1
USER_STREAM = 2
POLICY_STREAM = 3
ROBUST_STREAM = 4


def _as_entropy(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def substream(root_seed: int, *path) -> np.random.Generator:
    """Independent generator for the stream named by ``path``.

    Path components are small ints (stream tags, indices) or strings
    (hashed stably); the same (seed, path) always yields the same stream.
    """
    entropy = (int(root_seed),) + tuple(_as_entropy(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def episode_seed_label(root_seed: int, instance_idx: int, episode_idx: int) -> str:
    """Human-readable identity of one episode's user stream."""
    return f"{root_seed}:{instance_idx}:{episode_idx}"
