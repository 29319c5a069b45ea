"""Deterministic derivation of per-(purpose, round, client) random substreams.

One master 64-bit seed governs a whole experiment. Every draw comes from a
generator keyed by ``(purpose, round, client)`` through numpy's SeedSequence
spawn keys, so adding clients, rounds, or purposes never perturbs the streams
of existing ones. Within the per-round gain stream, clients consume a fixed
two-column block of uniforms each, which keeps the per-client draws
prefix-stable when the client count grows.
"""

import numpy as np

PURPOSES = ("gains", "noise", "awgn", "batch", "coin", "data", "init")
_PURPOSE_ID = {name: i for i, name in enumerate(PURPOSES)}


def substream(master_seed, purpose, round_index=0, client=0):
    """Return the generator for one (purpose, round, client) cell."""
    key = (_PURPOSE_ID[purpose], int(round_index), int(client))
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=key))
