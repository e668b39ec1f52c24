import math

import numpy as np
import pytest

from seqtomo.core import HilbertSpec, random_density
from seqtomo.leonhardt import (discrete_check, fermion_parity, leonhardt_char, leonhardt_phi,
                               moyal_dimensionless, mu0_check, relation_check, residual_rows)


def brute_leonhardt(rho, d, nu, n):
    """Direct transcription with explicit cyclic reduction over integer positions."""
    f = 1 - d % 2
    m = np.arange(d) - (d - 1) / 2
    total = 0j
    for i in range(d):
        target = (i - int(round(2 * nu))) % d
        total += np.exp(-4j * math.pi * n * (m[i] + f / 2 - nu) / d) * rho[i, target]
    return total


def test_parity():
    assert [fermion_parity(HilbertSpec(d)) for d in (2, 3, 4, 5)] == [1, 0, 1, 0]


@pytest.mark.parametrize("d", range(2, 10))
def test_against_transcription(d):
    spec = HilbertSpec(d)
    rho = random_density(spec, d, d)
    for two_nu in range(-d, 2 * d):
        for n in (0, 1, -2, 0.37):
            assert abs(leonhardt_char(rho, spec, two_nu / 2, n) - brute_leonhardt(rho.entries, d, two_nu / 2, n)) < 1e-13


def test_trace_and_domain():
    spec = HilbertSpec(4)
    rho = random_density(spec, 2, 0)
    assert abs(leonhardt_char(rho, spec, 0, 0) - 1) < 1e-14
    with pytest.raises(ValueError):
        leonhardt_char(rho, spec, 0.25, 0)
    with pytest.raises(ValueError):
        relation_check(rho, spec, 0, 0.1)


def test_odd_mu0_coincidence():
    spec = HilbertSpec(5)
    rho = random_density(spec, 5, 3)
    for n in (1, 2, -3):
        phi = -4 * math.pi * n / 5
        assert abs(leonhardt_char(rho, spec, 0, n) - moyal_dimensionless(rho, phi, 0)) < 1e-13


@pytest.mark.parametrize("d", range(2, 10))
def test_periodicity(d):
    spec = HilbertSpec(d)
    rho = random_density(spec, d, 2)
    for phi in np.random.default_rng(d).uniform(-6, 6, 10):
        for mu in range(d):
            lhs = leonhardt_phi(rho, spec, phi, mu + d)
            assert abs(lhs - np.exp(-1j * phi * d / 2) * leonhardt_phi(rho, spec, phi, mu)) < 1e-12


@pytest.mark.parametrize("d,mu", [(3, 1), (4, 2)])
def test_relation_examples(d, mu):
    spec = HilbertSpec(d)
    rho = random_density(spec, d, 11)
    for phi in np.random.default_rng(0).uniform(-10, 10, 50):
        assert relation_check(rho, spec, mu, phi) < 1e-12


@pytest.mark.parametrize("d", range(2, 10))
def test_all_relations(d):
    spec = HilbertSpec(d)
    rng = np.random.default_rng(100 + d)
    for s in range(20):
        rho = random_density(spec, int(rng.integers(1, d + 1)), s)
        phis = rng.uniform(-10, 10, 50)
        assert max(r[3] for r in residual_rows(rho, spec, phis)) < 1e-12
        assert max(mu0_check(rho, spec, p) for p in phis[:5]) < 1e-12
        for two_nu in range(1, d):
            for n in range(-d, d + 1):
                assert discrete_check(rho, spec, two_nu, n) < 1e-12


def test_residual_rows_shape():
    spec = HilbertSpec(3)
    rows = residual_rows(random_density(spec, 3, 0), spec, [0.1, 0.2])
    assert len(rows) == 6 and {r[1] for r in rows} == {0, 1, 2}
