# This file is a part of CycleWalk

import numpy as np

# Stream indices are part of the reproducibility contract: append, never reorder.
STREAMS = ("data", "init", "dropout", "jitter", "sampler", "heldout", "adapt")


def stream_seed(master: int, stream: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(STREAMS.index(stream),))


def stream_rng(master: int, stream: str) -> np.random.Generator:
    """Independent generator for one named stream of a master seed."""
    return np.random.default_rng(stream_seed(master, stream))


def sequence_seeds(master: int, count: int, heldout: bool = False) -> list:
    """Per-sequence scene seeds drawn from the `data` or `heldout` stream.
    The two splits come from separate 64-bit streams, so they do not overlap."""
    words = stream_seed(master, "heldout" if heldout else "data").generate_state(count, np.uint64)
    return [int(w) for w in words]


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state
