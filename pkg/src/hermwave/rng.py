"""Counter-based random streams keyed by (seed, replication, stream)."""

import numpy as np

# stream ids
PATH_NOISE = 0
CHAOS_INCREMENTS = 1
KMATRIX = 2

_MASK64 = (1 << 64) - 1


def stream(seed, rep_id=0, stream_id=PATH_NOISE):
    """Independent Philox generator for one (seed, rep_id, stream_id) key."""
    if seed < 0 or rep_id < 0 or stream_id < 0:
        raise ValueError("seed, rep_id and stream_id must be non-negative")
    ss = np.random.SeedSequence([int(seed) & _MASK64, int(rep_id), int(stream_id)])
    return np.random.Generator(np.random.Philox(ss))
