"""Index conventions, physical scales and the density-matrix type.

Half-odd labels (m, M-bar, M-bar_A) are carried as doubled integers so that
all index arithmetic stays exact; ``m = m2 / 2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    scale_product: float = 1e-14
    hermitian: float = 1e-12
    trace: float = 1e-12
    psd: float = 1e-10


TOL = Tolerances()


class IndexRangeError(ValueError):
    """Diagonal index outside [1-d, d-1]."""


class GridDomainError(ValueError):
    """Label not on the m-grid."""


class DensityMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertSpec:
    d: int
    l0: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.d!r}")
        if not (self.l0 > 0 and math.isfinite(self.l0)):
            raise ValueError(f"l0 must be positive, got {self.l0!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "l0", float(self.l0))

    @property
    def a0(self) -> float:
        return self.l0 / math.sqrt(self.d)

    @property
    def b0(self) -> float:
        return 2 * math.pi / (self.l0 * math.sqrt(self.d))

    @property
    def S(self) -> float:
        return (self.d - 1) / 2

    @property
    def S2(self) -> int:
        return self.d - 1

    def m2_grid(self) -> np.ndarray:
        """Doubled labels 2m, ascending: -(d-1), -(d-3), ..., d-1."""
        return np.arange(-(self.d - 1), self.d, 2)

    def m_grid(self) -> np.ndarray:
        return self.m2_grid() / 2

    def index(self, m2: int) -> int:
        """Array position of the doubled label ``m2``."""
        if not self.contains(m2):
            raise GridDomainError(f"2m={m2} is not on the m-grid for d={self.d}")
        return (int(m2) + self.d - 1) // 2

    def contains(self, m2: int) -> bool:
        return abs(m2) <= self.d - 1 and (m2 + self.d - 1) % 2 == 0

    @property
    def parity(self) -> int:
        """1 for even d, 0 for odd d."""
        return 1 - self.d % 2


@dataclass(frozen=True)
class IndexRange:
    mu: int
    mbar2: tuple[int, ...]

    @property
    def mbar(self) -> np.ndarray:
        return np.asarray(self.mbar2, dtype=float) / 2

    def __len__(self):
        return len(self.mbar2)


def mbar_grid(spec: HilbertSpec, mu: int) -> IndexRange:
    """Allowed M-bar values on the diagonal ``mu`` (doubled)."""
    mu = int(mu)
    if abs(mu) > spec.d - 1:
        raise IndexRangeError(f"|mu|={abs(mu)} exceeds d-1={spec.d - 1}")
    top = spec.d - 1 - abs(mu)
    return IndexRange(mu, tuple(range(-top, top + 1, 2)))


def reduce_modular(spec: HilbertSpec, m2: int, z: int) -> tuple[int, int]:
    """Reduce ``m - z`` onto the grid.

    Returns ``(f2, r)`` with ``f = m - z + r*d`` on the m-grid; labels doubled.
    """
    if not spec.contains(m2):
        raise GridDomainError(f"2m={m2} is not on the m-grid for d={spec.d}")
    shifted = m2 - 2 * int(z)
    # f2 = shifted + 2 r d must land in [-(d-1), d-1]
    r = math.floor((spec.d - 1 - shifted) / (2 * spec.d))
    return shifted + 2 * r * spec.d, r


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated state; rows and columns follow the ascending m-grid."""

    spec: HilbertSpec
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        d = self.spec.d
        if rho.shape != (d, d):
            raise DensityMatrixError(f"expected shape {(d, d)}, got {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise DensityMatrixError("non-finite entries")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > TOL.hermitian:
            raise DensityMatrixError(f"not Hermitian (deviation {herm:.3g})")
        tr = np.trace(rho)
        if abs(tr - 1) > TOL.trace:
            raise DensityMatrixError(f"trace is {tr:.15g}, not 1")
        lo = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min()
        if lo < -TOL.psd:
            raise DensityMatrixError(f"not positive semidefinite (min eigenvalue {lo:.3g})")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def d(self) -> int:
        return self.spec.d

    def element(self, m2: int, n2: int) -> complex:
        """<m|rho|n> addressed by doubled labels."""
        return self.entries[self.spec.index(m2), self.spec.index(n2)]

    def to_json(self) -> dict:
        return {
            "d": self.spec.d,
            "l0": self.spec.l0,
            "entries": matrix_to_pairs(self.entries),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DensityMatrix":
        spec = HilbertSpec(int(payload["d"]), float(payload.get("l0", 1.0)))
        return cls(spec, pairs_to_matrix(payload["entries"], spec.d))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "DensityMatrix":
        return cls.from_json(json.loads(Path(path).read_text()))


def _g17(x: float) -> float:
    return float(f"{x:.17g}")


def matrix_to_pairs(a: np.ndarray) -> list[list[float]]:
    """Row-major list of [re, im] pairs at 17 significant digits."""
    return [[_g17(z.real), _g17(z.imag)] for z in np.asarray(a, dtype=complex).ravel()]


def pairs_to_matrix(pairs, d: int) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.shape != (d * d, 2):
        raise DensityMatrixError(f"expected {d * d} [re, im] pairs, got shape {arr.shape}")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(d, d)


def random_density(spec: HilbertSpec, rank: int, seed=None) -> DensityMatrix:
    """Ginibre-style random state G G^dag / tr with G of shape (d, rank)."""
    if not 1 <= rank <= spec.d:
        raise ValueError(f"rank must be in [1, {spec.d}], got {rank}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((spec.d, rank)) + 1j * rng.standard_normal((spec.d, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix(spec, rho / np.trace(rho).real)


def bloch_density(n, l0: float = 1.0) -> DensityMatrix:
    """(1 + n.sigma)/2 with m=+1/2 as spin up; the m-grid is ascending, so
    index 0 is spin down."""
    nx, ny, nz = (float(v) for v in n)
    if nx * nx + ny * ny + nz * nz > 1 + 1e-12:
        raise ValueError("Bloch vector must have norm <= 1")
    rho = 0.5 * np.array([[1 - nz, nx + 1j * ny], [nx - 1j * ny, 1 + nz]])
    return DensityMatrix(HilbertSpec(2, l0), rho)
