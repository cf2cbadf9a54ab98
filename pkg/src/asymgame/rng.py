"""Per-path random streams.

Every Monte Carlo path owns a Philox4x64-10 counter-based generator keyed by the
pair ``(seed, path_id)``.  Results therefore do not depend on batching or on the
number of worker processes.  Tests assert statistics, never raw draws.
"""
import numpy as np

_MASK = (1 << 64) - 1


def path_rng(seed: int, path_id: int, stream: int = 0) -> np.random.Generator:
    """Generator for one path; ``stream > 0`` jumps to a disjoint block of the same key."""
    key = np.array([int(seed) & _MASK, int(path_id) & _MASK], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    if stream:
        bitgen = bitgen.jumped(stream)
    return np.random.Generator(bitgen)
