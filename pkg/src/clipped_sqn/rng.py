"""Named, independently seedable random streams.

Every run derives its generators from a single integer seed. Each component
(data generation, restart batches, refresh batches, output sampling, ...)
gets its own Philox stream keyed by a fixed integer, so changing how many
draws one component makes never perturbs another.
"""

from __future__ import annotations

import numpy as np

STREAM_KEYS = {
    "data": 0,
    "s1": 1,
    "s2": 2,
    "output": 3,
    "init": 4,
    "batch": 5,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for component ``name`` under ``seed``."""
    try:
        key = STREAM_KEYS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}") from None
    seq = np.random.SeedSequence(int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(seq))


def streams(seed: int, *names: str) -> dict[str, np.random.Generator]:
    return {name: stream(seed, name) for name in names}
