from __future__ import annotations

import numpy as np
import pytest

from dimerlab.graphs import (
    HGraph,
    RngSeed,
    WeightAssignment,
    build_cylinder,
    sample_weights,
)
from dimerlab.sampler import (
    GibbsSampler,
    Matching,
    exact_sample,
    matching_weight,
    observables,
)
from dimerlab.transfer import partition_polynomial, scalar_log_z

from helpers import STD_NORMAL, random_instance


def test_matching_rejects_shared_vertices():
    g = build_cylinder(3, HGraph.single())
    # edges 0 and 1 both touch vertex (2,1)
    bad = Matching(frozenset({0, 1}))
    with pytest.raises(ValueError, match="share a vertex"):
        bad.covered_flat(g)


def test_matching_weight_by_hand():
    g = build_cylinder(3, HGraph.single())
    w = WeightAssignment(g, np.array([[0.1], [0.2], [0.4]]),
                         np.array([[1.0], [2.0]]), np.zeros((3, 0)))
    m = Matching(frozenset({0}))  # dimer on layers 1-2, monomer at layer 3
    assert matching_weight(g, w, m) == pytest.approx(1.0 + 0.4)
    assert m.num_unpaired(g) == 1
    assert m.unpaired(g) == [(3, 1)]


def test_empty_matching_observables():
    g = build_cylinder(8, HGraph.path(2))
    obs = observables(g, Matching(frozenset()), t_grid=[0.0, 0.5, 1.0],
                      centering=2.0)
    assert obs.U == 16
    assert list(obs.height.theta) == [0.0, 8.0, 16.0]
    # theta(t) - n t u vanishes when every vertex is unpaired and u = h
    assert np.allclose(obs.height.theta_hat, 0.0)
    assert obs.prefix[3] == 6


def test_draws_are_valid_matchings_and_deterministic():
    rng = np.random.default_rng(17)
    g, w = random_instance(rng, n_lo=5, n_hi=5, fibers=["path2"])
    draws1 = exact_sample(g, w, RngSeed(99, 0), count=40)
    draws2 = exact_sample(g, w, RngSeed(99, 0), count=40)
    assert [sorted(m.edge_indices) for m in draws1] == [
        sorted(m.edge_indices) for m in draws2
    ]
    for m in draws1:
        m.covered_flat(g)  # raises if overlapping
        assert np.isfinite(matching_weight(g, w, m))


def test_empirical_monomer_pmf_matches_polynomial():
    rng = np.random.default_rng(19)
    g, w = random_instance(rng, n_lo=4, n_hi=4, fibers=["path2"])
    pmf = partition_polynomial(g, w).pmf()
    draws = exact_sample(g, w, RngSeed(7, 1), count=20000)
    counts = np.bincount([m.num_unpaired(g) for m in draws],
                         minlength=pmf.size)
    freq = counts / counts.sum()
    sigma = np.sqrt(pmf * (1 - pmf) / 20000)
    assert np.all(np.abs(freq - pmf) <= 5 * sigma + 1e-12)


def test_tilted_sampler_shifts_the_monomer_count():
    rng = np.random.default_rng(23)
    g, w = random_instance(rng, n_lo=5, n_hi=5, fibers=["single"])
    x = 1.2
    pmf = partition_polynomial(g, w).pmf(x)
    gen = np.random.default_rng(5)
    sampler = GibbsSampler(g, w, x=x)
    draws = sampler.draw_matchings(gen, 20000)
    mean = np.mean([m.num_unpaired(g) for m in draws])
    expect = pmf @ np.arange(pmf.size)
    var = pmf @ (np.arange(pmf.size) - expect) ** 2
    assert mean == pytest.approx(expect, abs=5 * np.sqrt(var / 20000))


def test_monomer_profiles_match_matchings():
    rng = np.random.default_rng(29)
    g, w = random_instance(rng, n_lo=6, n_hi=6, fibers=["path2"])
    sampler = GibbsSampler(g, w)
    gen = np.random.default_rng(11)
    S_path, m_path = sampler.draw_states(gen, 25)
    profiles = sampler.monomer_profiles(S_path, m_path)
    matchings = sampler.matchings_from_states(S_path, m_path)
    assert profiles.shape == (25, g.n)
    for row, m in zip(profiles, matchings):
        covered = m.covered_flat(g)
        per_layer = [
            sum(1 for j in range(1, g.h + 1) if g.flat_index((i, j)) not in covered)
            for i in range(1, g.n + 1)
        ]
        assert list(row) == per_layer


def test_sampler_weight_distribution_is_gibbs():
    # empirical mean of H(m) should match d/dbeta log Z at beta=1, i.e. the
    # Gibbs expectation of the Hamiltonian, computed here by a small tilt
    rng = np.random.default_rng(31)
    g, w = random_instance(rng, n_lo=4, n_hi=4, fibers=["single"])
    eta = 1e-4
    w_plus = WeightAssignment(g, w.nu * (1 + eta), w.omega_h * (1 + eta),
                              w.omega_v * (1 + eta))
    w_minus = WeightAssignment(g, w.nu * (1 - eta), w.omega_h * (1 - eta),
                               w.omega_v * (1 - eta))
    expect_H = (scalar_log_z(g, w_plus) - scalar_log_z(g, w_minus)) / (2 * eta)
    draws = exact_sample(g, w, RngSeed(3, 2), count=30000)
    values = np.array([matching_weight(g, w, m) for m in draws])
    assert values.mean() == pytest.approx(expect_H, abs=5 * values.std() / np.sqrt(30000))
