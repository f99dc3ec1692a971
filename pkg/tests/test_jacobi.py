from __future__ import annotations

import numpy as np
import pytest

from dimerlab.graphs import (
    DisorderSpec,
    HGraph,
    Law,
    RngSeed,
    WeightAssignment,
    build_cylinder,
    sample_weights,
)
from dimerlab.jacobi import (
    JacobiMatrix,
    det_abs,
    det_phase_index,
    lyapunov_check,
    omega_spectrum,
    resolvent_U,
)
from dimerlab.leeyang import spectrum
from dimerlab.transfer import partition_polynomial, scalar_log_z

from helpers import STD_NORMAL


def _chain(n, seed, stream=0, disorder=STD_NORMAL):
    g = build_cylinder(n, HGraph.single())
    return g, sample_weights(g, disorder, RngSeed(seed, stream))


def test_from_weights_requires_single_vertex_fiber():
    g = build_cylinder(4, HGraph.path(2))
    with pytest.raises(ValueError):
        JacobiMatrix.from_weights(g, WeightAssignment.constant(g))


def test_shape_validation():
    with pytest.raises(ValueError):
        JacobiMatrix(np.zeros(4), np.zeros(4))  # off-diagonal must be n-1


def test_determinant_identity_matches_partition_value():
    for n in (2, 5, 17, 64, 256, 512):
        g, w = _chain(n, seed=n)
        A = JacobiMatrix.from_weights(g, w)
        assert det_abs(A) == pytest.approx(scalar_log_z(g, w), abs=1e-9)
        assert det_phase_index(A) == n % 4


def test_matrix_gauge_shifts_log_determinant():
    g, w = _chain(33, seed=3)
    A = JacobiMatrix.from_weights(g, w)
    assert det_abs(A.gauged()) == pytest.approx(
        det_abs(A) - w.nu.sum(), abs=1e-9
    )
    assert np.allclose(A.gauged().nu, 0.0)


def test_eigenvalues_are_the_signed_zero_multiset():
    for n in (2, 5, 8, 13, 16, 20):
        g, w = _chain(n, seed=100 + n)
        lam = omega_spectrum(JacobiMatrix.from_weights(g, w))
        sp = spectrum(partition_polynomial(g, w.gauged()))
        assert np.max(np.abs(np.sort(lam) - sp.signed_atoms())) <= 1e-8


def test_resolvent_matches_mean_unpaired_count():
    for n in (3, 9, 31, 128):
        g, w = _chain(n, seed=500 + n)
        A = JacobiMatrix.from_weights(g, w)
        p = partition_polynomial(g, w.gauged())
        for x in (-0.7, 0.0, 1.3):
            assert resolvent_U(A, x) == pytest.approx(
                p.cumulants(x, 1)[0], abs=1e-8
            )
        # strong positive tilt turns every vertex into a monomer
        assert resolvent_U(A, 400.0) == pytest.approx(n, abs=1e-9)


def test_growth_rate_ladder_with_constant_weights():
    # deterministic chain: the free energy rate converges to the growth
    # rate of the gauge-transformed chain plus the vertex weight
    disorder = DisorderSpec(Law.constant(0.3), Law.constant(0.1))
    ladder = [_chain(n, seed=0, disorder=disorder) for n in (32, 64, 128, 256)]
    ref = _chain(4096, seed=0, disorder=disorder)
    rep = lyapunov_check(ladder, reference=ref)
    gaps = rep.gaps()
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 1e-2
    for entry in rep.entries:
        assert entry.nu_bar == pytest.approx(0.3)
        assert entry.f_hat == pytest.approx(entry.gamma_hat + entry.nu_bar)


def test_growth_rate_reference_defaults_to_last_entry():
    ladder = [_chain(n, seed=9, stream=i) for i, n in enumerate((16, 32, 64))]
    rep = lyapunov_check(ladder)
    assert rep.gamma_ref == pytest.approx(rep.entries[-1].gamma_hat)
