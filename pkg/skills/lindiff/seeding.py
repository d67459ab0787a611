"""Counter-based random streams derived from a single integer seed."""

from __future__ import annotations

import numpy as np

STREAM_TRAINING = 1
STREAM_NOISE = 2
STREAM_SAMPLING = 3
STREAM_TEST = 4
STREAM_ROTATION = 5
STREAM_TEST_NOISE = 6
STREAM_DENOISER_DIFF = 7

_SEED_MOD = 2**64


def make_rng(seed: int, stream: int = 0, index: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, index).

    The same triple always yields the same draws, independent of how work is
    split across threads.
    """
    seq = np.random.SeedSequence(entropy=int(seed) % _SEED_MOD, spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, stream: int, index: int) -> int:
    seq = np.random.SeedSequence(entropy=int(seed) % _SEED_MOD, spawn_key=(int(stream), int(index)))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
