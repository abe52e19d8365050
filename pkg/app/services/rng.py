"""Counter-based random streams keyed by (seed, replication, agent, step, purpose).

Every draw in the harness comes from a Philox generator whose key is a
SeedSequence over the full coordinate tuple, so the values a replication
sees never depend on worker scheduling.
"""

from enum import IntEnum

import numpy as np

# Observations are generated in fixed blocks of steps so that long runs do
# not build one generator per step.
OBSERVATION_BLOCK = 256


class Purpose(IntEnum):
    SCHEDULE = 1
    OBSERVATION = 2
    MONTE_CARLO = 3
    GRAPH = 4
    COVARIATE = 5


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for the given coordinates"""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def observation_stream(seed: int, replication: int, agent: int, block: int) -> np.random.Generator:
    return stream(seed, replication, agent, block, Purpose.OBSERVATION)


def monte_carlo_stream(seed: int, *keys: int) -> np.random.Generator:
    return stream(seed, *keys, Purpose.MONTE_CARLO)
