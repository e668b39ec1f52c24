"""Leonhardt's discrete characteristic function and its exact relation to the
Moyal function.

Phases here are dimensionless: ``phi`` corresponds to ``phi_A * a0`` of the
main convention, so ``moyal(phi; mu) = moyal_sys(rho, phi / a0, mu)``.
"""
from __future__ import annotations

import math

import numpy as np

from .core import DensityMatrix, HilbertSpec, reduce_modular
from .moyal import moyal_sys


def fermion_parity(spec: HilbertSpec) -> int:
    """f = 1 for even d, 0 for odd d."""
    return spec.parity


def _doubled(nu) -> int:
    two_nu = 2 * float(nu)
    if abs(two_nu - round(two_nu)) > 1e-12:
        raise ValueError(f"2*nu must be an integer, got nu={nu!r}")
    return int(round(two_nu))


def leonhardt_char(rho: DensityMatrix, spec: HilbertSpec, nu, n: float) -> complex:
    """sum_m exp[-(4 pi i / d) n (m + f/2 - nu)] <m|rho|m - 2 nu>, cyclic in m - 2 nu."""
    two_nu = _doubled(nu)
    f = fermion_parity(spec)
    total = 0j
    for m2 in spec.m2_grid():
        # m - 2nu in doubled labels is m2 - 2*two_nu; reduce by multiples of d
        target, _ = reduce_modular(spec, int(m2), two_nu)
        phase = -4j * math.pi * n * (m2 / 2 + f / 2 - two_nu / 2) / spec.d
        total += np.exp(phase) * rho.element(int(m2), target)
    return complex(total)


def leonhardt_phi(rho: DensityMatrix, spec: HilbertSpec, phi: float, mu: int) -> complex:
    """W~(phi; mu) = W~(nu = mu/2, n = -phi d / (4 pi))."""
    return leonhardt_char(rho, spec, mu / 2, -phi * spec.d / (4 * math.pi))


def moyal_dimensionless(rho: DensityMatrix, phi: float, mu: int) -> complex:
    return moyal_sys(rho, phi / rho.spec.a0, mu)


def relation_check(rho: DensityMatrix, spec: HilbertSpec, mu: int, phi: float) -> float:
    """|W~(phi; mu) - e^{i phi f/2} M(phi; mu) - e^{i phi (f-d)/2} M(phi; mu-d)|, 0 < mu < d."""
    if not 0 < mu < spec.d:
        raise ValueError(f"mu must satisfy 0 < mu < d, got {mu}")
    f, d = fermion_parity(spec), spec.d
    rhs = (np.exp(1j * phi * f / 2) * moyal_dimensionless(rho, phi, mu)
           + np.exp(1j * phi * (f - d) / 2) * moyal_dimensionless(rho, phi, mu - d))
    return float(abs(leonhardt_phi(rho, spec, phi, mu) - rhs))


def mu0_check(rho: DensityMatrix, spec: HilbertSpec, phi: float) -> float:
    """|W~(phi; 0) - e^{i phi f/2} M(phi; 0)|."""
    f = fermion_parity(spec)
    return float(abs(leonhardt_phi(rho, spec, phi, 0) - np.exp(1j * phi * f / 2) * moyal_dimensionless(rho, phi, 0)))


def discrete_check(rho: DensityMatrix, spec: HilbertSpec, two_nu: int, n: int) -> float:
    """Residual of W~(nu, n) = e^{-2 pi i n f/d} [M(-4 pi n/d; 2nu) + M(-4 pi n/d; 2nu - d)]
    for integer n and 0 < 2nu < d."""
    f, d = fermion_parity(spec), spec.d
    phi = -4 * math.pi * n / d
    rhs = np.exp(-2j * math.pi * n * f / d) * (moyal_dimensionless(rho, phi, two_nu)
                                               + moyal_dimensionless(rho, phi, two_nu - d))
    return float(abs(leonhardt_char(rho, spec, two_nu / 2, n) - rhs))


def residual_rows(rho: DensityMatrix, spec: HilbertSpec, phis) -> list[tuple[int, int, float, float]]:
    """(d, mu, phi, residual) for mu = 0 .. d-1; mu = 0 uses the phase-only relation."""
    rows = []
    for mu in range(spec.d):
        for phi in phis:
            r = mu0_check(rho, spec, phi) if mu == 0 else relation_check(rho, spec, mu, phi)
            rows.append((spec.d, mu, float(phi), r))
    return rows
