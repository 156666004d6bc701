"""Seeded random streams.

A single generator type (PCG64) is used throughout. Independent tasks (a
bootstrap replication, a Monte-Carlo dataset) get their own substream keyed
by ``(master_seed, task_index, ...)`` so results never depend on the order
in which tasks run.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "substream", "sample_innovations"]


def make_rng(seed):
    """Return a ``numpy.random.Generator`` for an int seed or key tuple.

    Passing an existing Generator returns it unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        key = [int(s) for s in seed]
    else:
        key = [int(seed)]
    if any(k < 0 for k in key):
        raise ValueError("seeds must be non-negative integers")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def substream(master_seed, *task):
    """Generator for task ``task`` under ``master_seed``."""
    return make_rng((int(master_seed), *[int(t) for t in task]))


def sample_innovations(dist, count, seed):
    """Draw ``count`` i.i.d. innovations from ``dist``.

    ``dist`` is an :class:`~quarts.innovation.InnovationDistribution`. The
    draw is a deterministic function of ``(dist, count, seed)``.
    """
    count = int(count)
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = make_rng(seed)
    return draw(dist, count, rng)


def draw(dist, count, rng):
    """Like :func:`sample_innovations` but consuming an existing generator."""
    kind = dist.kind
    if kind == "empirical":
        values = dist.resample_values()
        if values.size == 0:
            raise ValueError("empirical distribution has no stored innovations")
        if count == 0:
            return np.zeros(0)
        return values[rng.integers(0, values.size, size=count)]
    if count == 0:
        return np.zeros(0)
    if kind == "gaussian":
        return dist.location + dist.scale * rng.standard_normal(count)
    if kind == "asymmetric_laplace":
        ald = dist.laplace()
        # already has zero tau-quantile; mean centering moves its mean to mu
        shift = 0.0 if dist.center == "quantile" and dist.tau is not None else dist.mu - ald.mean
        return shift + ald.sample(rng, count)
    raise ValueError(f"unknown innovation distribution kind {kind!r}")
