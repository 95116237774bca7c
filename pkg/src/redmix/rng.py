"""Deterministic random streams.

Every stochastic object in the package is drawn from a stream addressed by
(master seed, role, ensemble, trajectory, segment).  Streams are mutually
independent and do not depend on evaluation order, so ensembles can be
computed serially or across worker processes with identical results.
"""

import numpy as np

# Stream roles.  FORCE drives the nominal dynamics and is the one stream a
# coupled pair shares with a plain simulation of the same trajectory id.
ROLE_FORCE = 0
ROLE_INDEPENDENT = 1
ROLE_AUX = 2


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator addressed by an integer key tuple under one master seed."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def force_stream(master_seed: int, traj: int, segment: int,
                 independent: bool = False) -> np.random.Generator:
    """Stream for the forcing of one trajectory over one unit segment.

    ``independent=True`` addresses a disjoint family used when a coupling
    needs fresh draws that are decoupled from the nominal force.
    """
    role = ROLE_INDEPENDENT if independent else ROLE_FORCE
    return stream(master_seed, role, 0, traj, segment)


def aux_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Stream for auxiliary draws (burn-in, initial directions, scans)."""
    return stream(master_seed, ROLE_AUX, *key)
