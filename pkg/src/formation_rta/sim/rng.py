"""Counter-based random substreams, one per purpose."""

from __future__ import annotations

import numpy as np

# Fixed ids so adding a purpose never shifts an existing stream.
PURPOSES = {
    "fault_noise": 1,
    "mc_geometry": 2,
    "adversarial": 3,
}


def substream(seed: int, purpose: str, *key: int) -> np.random.Generator:
    """Philox generator for ``purpose``; extra ``key`` ints select a sub-substream."""
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random purpose {purpose!r}")
    ss = np.random.SeedSequence([int(seed), PURPOSES[purpose], *map(int, key)])
    return np.random.Generator(np.random.Philox(ss))
