"""Named random streams keyed by (seed, replicate, role).

Every consumer of randomness asks for its own stream, so results never depend
on the order in which replicates or roles are evaluated.
"""
import numpy as np

ROLES = {
    "initial": 0,
    "candidates": 1,
    "picks": 2,
    "coins": 3,
    "marks": 4,
    "limit_initial": 5,
    "limit_jumps": 6,
}


def stream(seed: int, replicate: int, role: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(replicate), ROLES[role]))
    return np.random.Generator(np.random.PCG64(ss))
