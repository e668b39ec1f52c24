"""Discrete Moyal quasicharacteristic function of the system and its inverse."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DensityMatrix, HilbertSpec, IndexRangeError, mbar_grid

SINGULAR_SIN = 1e-9
LATTICE_SNAP = 1e-12


class IncompleteTableError(KeyError):
    def __init__(self, mu: int, mbarA2: int):
        self.mu = mu
        self.mbarA2 = mbarA2
        super().__init__(f"missing Moyal value at mu={mu}, 2*MbarA={mbarA2}")


def inversion_phase(spec: HilbertSpec, mu: int, mbarA2: int) -> float:
    """phi_A = 2 pi MbarA / (a0 (d - |mu|)) with MbarA = mbarA2 / 2."""
    return math.pi * mbarA2 / (spec.a0 * (spec.d - abs(mu)))


def _diagonal(entries: np.ndarray, mu: int) -> np.ndarray:
    # <Mbar + mu/2| rho |Mbar - mu/2> for ascending Mbar
    return np.diagonal(entries, offset=-mu)


def moyal_sys(rho: DensityMatrix, phi_A, mu: int):
    """Sum over Mbar of exp(i phi_A Mbar a0) <Mbar+mu/2|rho|Mbar-mu/2>.

    ``phi_A`` may be a scalar or an array; the result has the same shape.
    """
    return moyal_from_matrix(rho.spec, rho.entries, phi_A, mu)


def moyal_from_matrix(spec: HilbertSpec, entries: np.ndarray, phi_A, mu: int):
    mu = int(mu)
    rng = mbar_grid(spec, mu)
    diag = _diagonal(np.asarray(entries), mu)
    phi = np.asarray(phi_A, dtype=float)
    phase = np.exp(1j * np.multiply.outer(phi, rng.mbar * spec.a0))
    out = phase @ diag
    return complex(out) if out.ndim == 0 else out


@dataclass
class MoyalTable:
    """Values of the system Moyal function keyed by (mu, 2*MbarA).

    The key fixes phi_A exactly through :func:`inversion_phase`.
    """

    spec: HilbertSpec
    values: dict[tuple[int, int], complex] = field(default_factory=dict)

    def phase(self, mu: int, mbarA2: int) -> float:
        return inversion_phase(self.spec, mu, mbarA2)

    def __setitem__(self, key: tuple[int, int], value: complex):
        mu, mbarA2 = key
        if abs(mu) > self.spec.d - 1:
            raise IndexRangeError(f"|mu|={abs(mu)} exceeds d-1")
        self.values[(int(mu), int(mbarA2))] = complex(value)

    def __getitem__(self, key: tuple[int, int]) -> complex:
        return self.values[key]

    def __contains__(self, key) -> bool:
        return key in self.values

    def lookup(self, mu: int, mbarA2: int) -> complex:
        """Stored value, else the Hermitian partner conj(value(-mu, -phi))."""
        if (mu, mbarA2) in self.values:
            return self.values[(mu, mbarA2)]
        if (-mu, -mbarA2) in self.values:
            return self.values[(-mu, -mbarA2)].conjugate()
        raise IncompleteTableError(mu, mbarA2)

    @classmethod
    def from_state(cls, rho: DensityMatrix, both_signs: bool = False) -> "MoyalTable":
        spec = rho.spec
        table = cls(spec)
        mus = range(1 - spec.d, spec.d) if both_signs else range(spec.d)
        for mu in mus:
            keys = mbar_grid(spec, mu).mbar2
            phis = [inversion_phase(spec, mu, k) for k in keys]
            for k, v in zip(keys, moyal_sys(rho, phis, mu)):
                table[mu, k] = v
        return table

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "mbarA_doubled", "phiA", "re", "im"])
            for (mu, k), v in sorted(self.values.items()):
                w.writerow([mu, k, f"{self.phase(mu, k):.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])


def invert_moyal(table: MoyalTable) -> np.ndarray:
    """Rebuild <m|rho|m'> from the Moyal values on the inversion grids.

    The result is not validated; noisy tables give non-physical matrices.
    """
    spec = table.spec
    d = spec.d
    out = np.zeros((d, d), dtype=complex)
    for mu in range(1 - d, d):
        n = d - abs(mu)
        keys = mbar_grid(spec, mu).mbar2
        vals = np.array([table.lookup(mu, k) for k in keys])
        # the Mbar grid coincides with the MbarA grid for this diagonal
        mbar = np.asarray(keys) / 2
        kernel = np.exp(-2j * np.pi * np.outer(mbar, mbar) / n) / n
        diag = kernel @ vals
        rows = np.arange(max(mu, 0), max(mu, 0) + n)
        out[rows, rows - mu] = diag
    return out


def dirichlet_factor(spec: HilbertSpec, x):
    """(1/d) sum_m exp(i x m b0) = sin(d b0 x / 2) / (d sin(b0 x / 2))."""
    d, b0 = spec.d, spec.b0
    y = np.asarray(x, dtype=float) * b0 / 2
    s = np.sin(y)
    singular = np.abs(s) < SINGULAR_SIN
    safe = np.where(singular, 1.0, s)
    val = np.where(singular, np.cos(d * y) / np.cos(y), np.sin(d * y) / (d * safe))
    # exact zeros at x = k a0, k not a multiple of d (sin(pi k) is only ~1e-16)
    k = np.asarray(x, dtype=float) / spec.a0
    on_lattice = np.abs(k - np.round(k)) < LATTICE_SNAP * np.maximum(1.0, np.abs(k))
    val = np.where(on_lattice & ~singular, 0.0, val)
    return float(val) if val.ndim == 0 else val
