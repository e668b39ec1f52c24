"""The Fourier-conjugate observable pair and the qubit-register observable."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import HilbertSpec, reduce_modular


@dataclass(frozen=True, eq=False)
class ConjugateBasis:
    spec: HilbertSpec
    F: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class ObservablePair:
    spec: HilbertSpec
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    basis: ConjugateBasis = field(repr=False)


def conjugate_basis(spec: HilbertSpec) -> ConjugateBasis:
    """``F[m', m] = exp(2 pi i m m' / d) / sqrt(d)``; column m is the conjugate ket."""
    m = spec.m_grid()
    F = np.exp(2j * np.pi * np.outer(m, m) / spec.d) / np.sqrt(spec.d)
    F.setflags(write=False)
    return ConjugateBasis(spec, F)


def build_pair(spec: HilbertSpec) -> ObservablePair:
    basis = conjugate_basis(spec)
    m = spec.m_grid()
    A = np.diag(m * spec.a0).astype(complex)
    F = basis.F
    B = spec.b0 * (F * m) @ F.conj().T
    A.setflags(write=False)
    B.setflags(write=False)
    return ObservablePair(spec, A, B, basis)


def expm_B(pair: ObservablePair, t: float) -> np.ndarray:
    """exp(i t B) from the known spectral decomposition of B."""
    F = pair.basis.F
    phases = np.exp(1j * t * pair.spec.b0 * pair.spec.m_grid())
    return (F * phases) @ F.conj().T


def translation_check(pair: ObservablePair, z: int) -> float:
    """Largest deviation of exp(i z a0 B)|m> from the signed, wrapped |m - z>."""
    spec = pair.spec
    U = expm_B(pair, z * spec.a0)
    worst = 0.0
    for col, m2 in enumerate(spec.m2_grid()):
        f2, r = reduce_modular(spec, int(m2), z)
        target = np.zeros(spec.d, dtype=complex)
        target[spec.index(f2)] = (-1) ** ((spec.d - 1) * r)
        worst = max(worst, float(np.linalg.norm(U[:, col] - target)))
    return worst


@dataclass(frozen=True)
class QubitObservable:
    """Diagonal of sum_p 2^(p-1) sigma_z,p together with the affine map
    ``m * a0 = scale * a0 * eigenvalue + shift`` onto the standard grid.

    Qubit p=1 is the least significant; basis states are ordered as the
    binary number (s_N ... s_1) with bit 1 meaning sigma_z = -1.
    """

    n_qubits: int
    eigenvalues: np.ndarray = field(repr=False)
    scale: float
    shift: float
    spec: HilbertSpec

    def mapped(self) -> np.ndarray:
        return self.scale * self.spec.a0 * self.eigenvalues + self.shift


def qubit_A(n_qubits: int, l0: float = 1.0) -> QubitObservable:
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    dim = 2 ** n_qubits
    idx = np.arange(dim)
    ev = np.zeros(dim)
    for p in range(1, n_qubits + 1):
        bit = (idx >> (p - 1)) & 1
        ev += 2 ** (p - 1) * (1 - 2 * bit)
    # spectrum is the odd integers in [-(2^n-1), 2^n-1]; halving yields the m-grid
    return QubitObservable(n_qubits, ev, 0.5, 0.0, HilbertSpec(dim, l0))
