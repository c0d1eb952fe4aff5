"""Named, reproducible random streams.

Every source of randomness in the simulator is a numpy Generator derived
from (master_seed, setup index, purpose name).  Two runs with the same
master seed consume identical streams regardless of execution order or
thread count, because each purpose gets its own independent generator.
"""

import numpy as np

# Fixed purpose -> integer table. Do not renumber: changing it changes
# every seeded experiment.
_PURPOSES = {
    "ue_drop": 1,
    "precoders": 2,
    "norm": 3,
    "comm_model": 4,
    "symbols": 5,
    "calibration": 6,
    "trials": 7,
    "reinit": 8,
}


def stream(master_seed: int, setup_index: int, purpose: str) -> np.random.Generator:
    """Return the named random stream for one setup of one experiment."""
    try:
        pid = _PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}") from None
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(int(setup_index), pid))
    return np.random.default_rng(ss)


def substream(master_seed: int, setup_index: int, purpose: str,
              salt: int) -> np.random.Generator:
    """Stream with an extra derivation level (e.g. retry counters)."""
    pid = _PURPOSES[purpose]
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(int(setup_index), pid, int(salt)))
    return np.random.default_rng(ss)
