"""Independent equilibrium replicas fanned out over a thread pool.

The compiled event loop releases the GIL, so threads give real parallelism;
with the pure-Python fallback they only interleave.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..gasket import GasketGraph
from ..rng import RNG_DESCRIPTION, replica_rng
from ..series import FieldSeries
from .dynamics import Probes, run, sample_equilibrium
from .rates import EquilibriumProfile


def _one_replica(graph, profile, probes, horizon, times, seed, replica, backend):
    rng = replica_rng(seed, replica)
    config = sample_equilibrium(profile, graph, rng)
    return run(config, profile.model, horizon, times, probes=probes, rng=rng, backend=backend)


def simulate_replicas(
    graph: GasketGraph,
    profile: EquilibriumProfile,
    probes: Probes,
    horizon: float,
    sample_times,
    replicas: int,
    seed: int,
    *,
    workers: int | None = 1,
    backend: str | None = None,
    metadata: dict | None = None,
) -> FieldSeries:
    """Run ``replicas`` stationary trajectories started from nu_rho.

    Replica r draws its initial configuration and its jumps from the stream
    ``replica_rng(seed, r)``, so results do not depend on ``workers``.
    """
    times = np.asarray(sample_times, dtype=float)
    if workers is None:
        workers = os.cpu_count() or 1
    args = [(graph, profile, probes, horizon, times, seed, r, backend) for r in range(replicas)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _one_replica(*a), args))
    else:
        results = [_one_replica(*a) for a in args]

    def stack(attr):
        return np.array([[getattr(s, attr) for s in res] for res in results])

    F = len(probes.fields)
    C = len(probes.channels)
    T = len(times)
    meta = {
        "level": graph.level,
        "rho": profile.rho,
        "phi": profile.phi,
        "dphi": profile.dphi,
        "chi": profile.chi,
        "rate_model": profile.model.name,
        "horizon": float(horizon),
        "replicas": replicas,
        "seed": seed,
        "rng": RNG_DESCRIPTION,
    }
    meta.update(metadata or {})
    return FieldSeries(
        times=times,
        field_labels=list(probes.fields),
        fields=stack("fields").reshape(replicas, T, F),
        channel_labels=list(probes.channels),
        channels=stack("channels").reshape(replicas, T, C),
        integrals=stack("integrals").reshape(replicas, T, C),
        qv=stack("qv").reshape(replicas, T, F),
        jump_max=stack("jump_max").reshape(replicas, T, F),
        events=stack("events").reshape(replicas, T),
        particles=stack("particles").reshape(replicas, T),
        seeds=np.full(replicas, seed, dtype=np.int64),
        metadata=meta,
    )
