"""Initial state of the two detectors and its Moyal function.

Conventions: ``Phi`` acts as ``-i d/dJ`` so that
``moyal_pr(phi, j) = int dJ exp(i phi.J) <J + j/2|rho_pr|J - j/2>``, which
is the form the forward model is built from. Variable order in the
Gaussian covariance is (J_A, J_B, Phi_A, Phi_B).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ProbeError(ValueError):
    pass


class GridExtentError(ProbeError):
    """Requested shift does not fit on the probe grid."""


def _vec2(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape[-1:] != (2,):
        raise ProbeError(f"expected a trailing axis of length 2, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class GaussianProbe:
    mean: np.ndarray
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(4)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (4, 4):
            raise ProbeError("covariance must be 4x4")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ProbeError("covariance must be symmetric")
        cov = (cov + cov.T) / 2
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ProbeError("covariance must be positive definite")
        for k, name in ((0, "A"), (1, "B")):
            deficit = 0.25 - cov[k, k] * cov[k + 2, k + 2]
            if deficit > 1e-9:
                raise ProbeError(f"detector {name} violates var(J) var(Phi) >= 1/4")
            if deficit > 1e-13:
                warnings.warn(f"detector {name} is at the uncertainty bound within {deficit:.1e}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def jj(self) -> np.ndarray:
        return self.cov[:2, :2]

    def moyal_pr(self, phi, j):
        """exp(i mean.v - v.cov.v / 2) with v = (phi_A, phi_B, j_A, j_B)."""
        v = np.concatenate(np.broadcast_arrays(_vec2(phi), _vec2(j)), axis=-1)
        quad = np.einsum("...i,ij,...j->...", v, self.cov, v)
        out = np.exp(1j * (v @ self.mean) - 0.5 * quad)
        return complex(out) if out.ndim == 0 else out

    def mixed_element(self, J, j):
        """<J + j/2| rho_pr |J - j/2> from the Gaussian Wigner function."""
        J, j = np.broadcast_arrays(_vec2(J), _vec2(j))
        cjj = self.jj
        inv = np.linalg.inv(cjj)
        pj = self.cov[2:, :2]
        gain = pj @ inv
        cond = self.cov[2:, 2:] - gain @ pj.T
        dJ = J - self.mean[:2]
        norm = 1.0 / (2 * math.pi * math.sqrt(np.linalg.det(cjj)))
        dens = norm * np.exp(-0.5 * np.einsum("...i,ij,...j->...", dJ, inv, dJ))
        centre = self.mean[2:] + dJ @ gain.T
        phase = np.einsum("...i,...i->...", j, centre)
        damp = np.einsum("...i,ij,...j->...", j, cond, j)
        out = dens * np.exp(1j * phase - 0.5 * damp)
        return complex(out) if out.ndim == 0 else out

    def widths(self) -> tuple[float, float]:
        return math.sqrt(self.cov[0, 0]), math.sqrt(self.cov[1, 1])

    def is_product_pure(self, tol: float = 1e-12) -> bool:
        """True when the detectors are uncorrelated and each one is pure."""
        a, b = [0, 2], [1, 3]
        if np.max(np.abs(self.cov[np.ix_(a, b)])) > tol:
            return False
        return all(abs(np.linalg.det(self.cov[np.ix_(k, k)]) - 0.25) < 1e-9 for k in (a, b))

    def wavefunction(self, axis: int, J):
        """psi_axis(J) for a product-pure probe (axis 0 = A, 1 = B)."""
        s2 = self.cov[axis, axis]
        c = self.cov[axis, axis + 2]
        J0, P0 = self.mean[axis], self.mean[axis + 2]
        x = np.asarray(J, dtype=float) - J0
        return (2 * math.pi * s2) ** -0.25 * np.exp(-x * x / (4 * s2) + 1j * c * x * x / (2 * s2) + 1j * P0 * x)

    def to_json(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


def gaussian_from_widths(sigma_A: float, sigma_B: float, corr: float | None = None,
                         kappa: float | None = None) -> GaussianProbe:
    """Zero-mean pure Gaussian pointer pair.

    ``corr`` correlates the two pointer positions; ``kappa`` entangles them
    through the phase exp(i kappa J_A J_B), which correlates J_B with Phi_A.
    The two-probe linear systems are only invertible when ``kappa != 0``.
    """
    if not (sigma_A > 0 and sigma_B > 0):
        raise ProbeError("pointer widths must be positive")
    c = 0.0 if corr is None else float(corr)
    if not abs(c) < 1:
        raise ProbeError("|corr| must be < 1")
    k = 0.0 if kappa is None else float(kappa)
    jj = np.array([[sigma_A ** 2, c * sigma_A * sigma_B], [c * sigma_A * sigma_B, sigma_B ** 2]])
    gain = np.array([[0.0, k], [k, 0.0]])
    pj = gain @ jj
    pp = np.linalg.inv(jj) / 4 + gain @ jj @ gain.T
    cov = np.block([[jj, pj.T], [pj, pp]])
    return GaussianProbe(np.zeros(4), cov)


@dataclass(frozen=True, eq=False)
class GridAxis:
    """One detector's density matrix sampled at J_min + k h, k < n."""

    h: float
    J_min: float
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ProbeError("grid density matrix must be square")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
            raise ProbeError("grid density matrix must be Hermitian")
        tr = self.h * np.trace(rho).real
        if abs(tr - 1) > 1e-6:
            raise ProbeError(f"grid density matrix has trace {tr:.9g}, expected 1")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self.J_min + self.h * np.arange(self.n)

    @classmethod
    def from_wavefunction(cls, psi, h: float, J_min: float) -> "GridAxis":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / math.sqrt(h * np.vdot(psi, psi).real)
        return cls(h, J_min, np.outer(psi, psi.conj()))

    def _check_shift(self, j):
        if np.any(np.abs(j) >= (self.n - 1) * self.h):
            raise GridExtentError(f"shift {np.max(np.abs(j)):.4g} exceeds grid extent {(self.n - 1) * self.h:.4g}")

    def _antidiagonal_sum(self, phi, k: int):
        # h * sum_p exp(i phi (J_p + J_q)/2) <J_p|rho|J_q>, p - q = k
        diag = np.diagonal(self.rho, offset=-k)
        start = max(k, 0)
        p = start + np.arange(diag.size)
        centre = self.J_min + self.h * (p - k / 2)
        return self.h * (np.exp(1j * np.multiply.outer(phi, centre)) @ diag)

    def moyal(self, phi, j):
        phi, j = np.broadcast_arrays(np.asarray(phi, dtype=float), np.asarray(j, dtype=float))
        self._check_shift(j)
        t = j / self.h
        lo = np.floor(t)
        w = t - lo
        out = np.empty(phi.shape, dtype=complex)
        for idx in np.ndindex(phi.shape):
            k, x = int(lo[idx]), w[idx]
            if x <= 1e-12:
                out[idx] = self._antidiagonal_sum(phi[idx], k)
            elif abs(k - 1) < self.n - 1 and abs(k + 2) < self.n - 1:
                # cubic Lagrange through shifts k-1 .. k+2
                c = (-x * (x - 1) * (x - 2) / 6, (x + 1) * (x - 1) * (x - 2) / 2,
                     -(x + 1) * x * (x - 2) / 2, (x + 1) * x * (x - 1) / 6)
                out[idx] = sum(ci * self._antidiagonal_sum(phi[idx], k + o) for ci, o in zip(c, (-1, 0, 1, 2)))
            else:
                out[idx] = (1 - x) * self._antidiagonal_sum(phi[idx], k) + x * self._antidiagonal_sum(phi[idx], k + 1)
        return out

    def element(self, J, j):
        """Bilinear lookup of <J + j/2|rho|J - j/2>; zero off the grid."""
        J, j = np.broadcast_arrays(np.asarray(J, dtype=float), np.asarray(j, dtype=float))
        x = (J + j / 2 - self.J_min) / self.h
        y = (J - j / 2 - self.J_min) / self.h
        x0, y0 = np.floor(x).astype(int), np.floor(y).astype(int)
        wx, wy = x - x0, y - y0
        out = np.zeros(J.shape, dtype=complex)
        for dx, fx in ((0, 1 - wx), (1, wx)):
            for dy, fy in ((0, 1 - wy), (1, wy)):
                xi, yi = x0 + dx, y0 + dy
                ok = (xi >= 0) & (xi < self.n) & (yi >= 0) & (yi < self.n) & (fx * fy > 0)
                out[ok] += (fx * fy)[ok] * self.rho[xi[ok], yi[ok]]
        return out


@dataclass(frozen=True, eq=False)
class GridProbe:
    """Product of two independently sampled detector states."""

    axes: tuple[GridAxis, GridAxis]

    def moyal_pr(self, phi, j):
        phi, j = np.broadcast_arrays(_vec2(phi), _vec2(j))
        out = self.axes[0].moyal(phi[..., 0], j[..., 0]) * self.axes[1].moyal(phi[..., 1], j[..., 1])
        return complex(out) if out.ndim == 0 else out

    def mixed_element(self, J, j):
        J, j = np.broadcast_arrays(_vec2(J), _vec2(j))
        out = self.axes[0].element(J[..., 0], j[..., 0]) * self.axes[1].element(J[..., 1], j[..., 1])
        return complex(out) if out.ndim == 0 else out

    def widths(self) -> tuple[float, float]:
        res = []
        for ax in self.axes:
            p = np.diag(ax.rho).real * ax.h
            mean = p @ ax.points
            res.append(math.sqrt(max(p @ (ax.points - mean) ** 2, 0.0)))
        return tuple(res)

    def bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return tuple((ax.J_min, ax.J_min + (ax.n - 1) * ax.h) for ax in self.axes)

    @classmethod
    def from_gaussian(cls, probe: GaussianProbe, h: float | tuple[float, float], half_width: float | tuple[float, float]) -> "GridProbe":
        if not probe.is_product_pure():
            raise ProbeError("only uncorrelated pure Gaussian probes can be put on a product grid")
        hs = np.broadcast_to(np.asarray(h, dtype=float), (2,))
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), (2,))
        axes = []
        for axis in (0, 1):
            n = int(round(2 * hw[axis] / hs[axis])) + 1
            J_min = probe.mean[axis] - (n - 1) * hs[axis] / 2
            pts = J_min + hs[axis] * np.arange(n)
            axes.append(GridAxis.from_wavefunction(probe.wavefunction(axis, pts), hs[axis], J_min))
        return cls(tuple(axes))

    def save(self, path: str | Path) -> None:
        """JSON header at ``path`` plus one ``.npy`` array per axis beside it."""
        path = Path(path)
        header = {"kind": "grid", "axes": []}
        for name, ax in zip("AB", self.axes):
            data = path.with_name(f"{path.stem}_{name}.npy")
            np.save(data, ax.rho)
            header["axes"].append({"h": ax.h, "J_min": ax.J_min, "n_points": ax.n, "data": data.name})
        path.write_text(json.dumps(header, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "GridProbe":
        path = Path(path)
        header = json.loads(path.read_text())
        axes = []
        for spec in header["axes"]:
            rho = np.load(path.parent / spec["data"])
            if rho.shape != (spec["n_points"], spec["n_points"]):
                raise ProbeError(f"{spec['data']}: shape {rho.shape} does not match n_points={spec['n_points']}")
            axes.append(GridAxis(float(spec["h"]), float(spec["J_min"]), rho))
        if len(axes) != 2:
            raise ProbeError("grid probe needs exactly two axes")
        return cls(tuple(axes))


def moyal_pr(probe, phi, j):
    return probe.moyal_pr(phi, j)


def mixed_element(probe, J, j):
    return probe.mixed_element(J, j)
