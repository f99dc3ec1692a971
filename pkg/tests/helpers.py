"""Shared helpers for the test suite: small randomized instances."""
from __future__ import annotations

import numpy as np

from dimerlab.graphs import (
    DisorderSpec,
    HGraph,
    Law,
    RngSeed,
    build_cylinder,
    sample_weights,
)

STD_NORMAL = DisorderSpec(Law.normal(0.0, 1.0), Law.normal(0.0, 1.0))

# vertex weights in [-0.5, 0], edge weights in [0, 1.2]: the gauge-transformed
# edge weights stay nonnegative, where the weighted-degree zero bound is sharp
NONNEG_GAUGE = DisorderSpec(Law.uniform(-0.5, 0.0), Law.uniform(0.0, 1.2))

FIBERS = {
    "single": HGraph.single(),
    "path2": HGraph.path(2),
    "path3": HGraph.path(3),
    "cycle3": HGraph.cycle(3),
}


def random_instance(rng: np.random.Generator, n_lo=2, n_hi=8, fibers=None,
                    disorder=STD_NORMAL, max_vertices=None):
    """One random (graph, weights) pair with its own derived seed."""
    names = list(fibers or FIBERS)
    while True:
        name = names[rng.integers(len(names))]
        H = FIBERS[name]
        n = int(rng.integers(n_lo, n_hi + 1))
        if max_vertices is None or n * H.h <= max_vertices:
            break
    g = build_cylinder(n, H)
    seed = RngSeed(int(rng.integers(2**32)), 0)
    return g, sample_weights(g, disorder, seed)
