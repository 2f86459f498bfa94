"""Counter-based random streams, one per (replication, purpose, user).

Every stream is a Philox generator seeded with
``SeedSequence([master_seed, rep_id, kind, user])``. Each user consumes its
own streams sequentially, so results do not depend on the block size and two
policy arms run with the same seed see the same channel, arrival and
decision uniforms.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class StreamKind(IntEnum):
    CHANNEL = 0
    ARRIVAL = 1
    POLICY = 2


def stream(master_seed: int, rep_id: int, kind: StreamKind, user: int) -> np.random.Generator:
    seq = np.random.SeedSequence([int(master_seed), int(rep_id), int(kind), int(user)])
    return np.random.Generator(np.random.Philox(seq))


class ReplicationStreams:
    """Per-user generators of one replication."""

    def __init__(self, master_seed: int, rep_id: int, n_users: int):
        self.master_seed = int(master_seed)
        self.rep_id = int(rep_id)
        self.n_users = n_users
        self._gens = {
            kind: [stream(master_seed, rep_id, kind, i) for i in range(n_users)]
            for kind in StreamKind
        }

    def generators(self, kind: StreamKind) -> list:
        return self._gens[StreamKind(kind)]

    def uniforms(self, kind: StreamKind, size: int) -> np.ndarray:
        """(size, n_users) array; column i continues user i's stream."""
        out = np.empty((size, self.n_users))
        for i, g in enumerate(self._gens[StreamKind(kind)]):
            out[:, i] = g.random(size)
        return out
