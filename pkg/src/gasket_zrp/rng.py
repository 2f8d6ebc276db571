"""Per-replica random streams derived from (seed, replica index)."""

import numpy as np

RNG_DESCRIPTION = "numpy PCG64, SeedSequence(entropy=seed, spawn_key=(replica,))"


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica,))))
