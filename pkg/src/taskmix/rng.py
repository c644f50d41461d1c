"""Deterministic RNG stream splitting.

One root seed fans out into independent named streams (task sampling,
network init, exploration noise, replay sampling) so that runs sharing a
root seed see identical task sequences and noise where that matters for
method comparisons.
"""

import numpy as np

# stream ids used by the harness and trainers
TASKS = 0
INIT = 1
EXPLORE = 2
REPLAY = 3
TASK_PICK = 4


def stream(root_seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream addressed by ``key`` under ``root_seed``.

    Uses SeedSequence spawn keys, so streams are independent and stable:
    the same (root_seed, key) always yields the same draw sequence.
    """
    ss = np.random.SeedSequence(root_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
