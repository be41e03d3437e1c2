"""Deterministic random-stream construction shared by every module.

All sampling in the package flows through `stream`, which derives a
counter-based generator from (master seed, module tag, extra keys). Streams
with distinct keys are statistically independent, and any single stream can be
rebuilt in isolation, so per-replica results do not depend on evaluation order.
"""

from __future__ import annotations

import numpy as np

# Fixed module tags; changing these renumbers every published artifact.
MODULE_ENV = 1
MODULE_RANGELAW = 2
MODULE_POLYMER = 3
MODULE_STOCHPROC = 4
MODULE_VARPROB = 5
MODULE_CLI = 6


def stream(master_seed: int, module: int, *keys: int) -> np.random.Generator:
    """Return the generator for (master_seed, module, *keys).

    Philox is counter-based: spawn_key separation guarantees independence
    between streams without coordination.
    """
    if master_seed < 0:
        raise ValueError("master_seed must be nonnegative")
    ss = np.random.SeedSequence(master_seed, spawn_key=(module, *map(int, keys)))
    return np.random.Generator(np.random.Philox(ss))


def replica_seed(master_seed: int, index: int) -> int:
    """Derived master seed for one replica, recorded in manifests.

    Kept below 2^63 so the value survives signed 64-bit serialization.
    """
    if master_seed < 0:
        raise ValueError("master_seed must be nonnegative")
    ss = np.random.SeedSequence(master_seed, spawn_key=(MODULE_CLI, int(index)))
    return int(ss.generate_state(1, np.uint64)[0]) & ((1 << 63) - 1)
