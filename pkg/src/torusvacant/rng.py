"""Reproducible random streams.

Every stochastic routine in the package draws from a Philox counter-based
generator keyed by (seed, stream). Streams keyed by distinct pairs are
independent, and a (seed, stream) pair always reproduces the same draws
regardless of how many other streams ran, in which order, or on how many
workers. Experiment commands derive per-replica streams as
``stream = (point_index << 32) | replica_index`` (derivation version 1).
"""

from __future__ import annotations

import numpy as np

STREAM_DERIVATION_VERSION = 1


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream_id) key."""
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), stream_id & (2**64 - 1)]))


def replica_stream_id(point_index: int, replica_index: int) -> int:
    """Stream id layout used by the experiment harness (version 1)."""
    if not 0 <= replica_index < 2**32:
        raise ValueError("replica_index out of range")
    if not 0 <= point_index < 2**32:
        raise ValueError("point_index out of range")
    return (point_index << 32) | replica_index
