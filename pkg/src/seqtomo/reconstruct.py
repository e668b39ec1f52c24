"""Inverse pipeline: characteristic function -> Moyal table -> density matrix."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .core import DensityMatrix, HilbertSpec, matrix_to_pairs, mbar_grid
from .forward import OutcomeSet, exact_char, partner_mu, wrap_sign
from .moyal import MoyalTable, inversion_phase, invert_moyal

COND_LIMIT = 1e8
MIN_PROBE_MOYAL = 1e-12
MIN_BLUR = 1e-9
ECF_CHUNK = 1 << 17


class ProbeInsensitivityError(ArithmeticError):
    def __init__(self, phis):
        self.phis = list(phis)
        super().__init__(f"probe Moyal function below {MIN_PROBE_MOYAL:g} at phi_A = "
                         + ", ".join(f"{p:.6g}" for p in self.phis))


class UnrecoverableFrequencyError(ArithmeticError):
    def __init__(self, phis):
        self.phis = [tuple(map(float, p)) for p in phis]
        super().__init__(f"readout blur factor vanishes at {len(self.phis)} frequencies: {self.phis[:5]}")


def empirical_char(outcomes: OutcomeSet, phi):
    """(1/N) sum_k exp(i phi . J_k); ``phi`` has a trailing axis of length 2."""
    phi = np.asarray(phi, dtype=float)
    flat = phi.reshape(-1, 2)
    J = outcomes.samples
    acc = np.zeros(flat.shape[0], dtype=complex)
    for start in range(0, J.shape[0], ECF_CHUNK):
        acc += np.exp(1j * (J[start:start + ECF_CHUNK] @ flat.T)).sum(axis=0)
    out = (acc / J.shape[0]).reshape(phi.shape[:-1])
    return complex(out) if out.ndim == 0 else out


class ExactSource:
    """Characteristic function computed from a known state (no sampling)."""

    def __init__(self, rho: DensityMatrix, probe, spec: HilbertSpec):
        self.rho, self.probe, self.spec = rho, probe, spec

    def __call__(self, phi):
        return exact_char(self.rho, self.probe, self.spec, phi)


class PairSolution(NamedTuple):
    x: complex
    y: complex
    cond: float
    ill_conditioned: bool


def pair_matrix(probe, spec: HilbertSpec, phi_A: float, mu: int) -> np.ndarray:
    """Probe coefficients of the two equations at phi_B = mu a0 and its partner.

    Row r is the equation at phi_B = b_r, column c multiplies the unknown on
    diagonal b_c, with b = (mu a0, (mu - d) a0).
    """
    b = np.array([mu, partner_mu(spec, mu)]) * spec.a0
    phis = np.stack([np.full(2, phi_A), b], axis=1)
    M = np.empty((2, 2), dtype=complex)
    for c in range(2):
        M[:, c] = probe.moyal_pr(phis, np.tile([-b[c], 0.0], (2, 1)))
    sign = wrap_sign(spec)
    M[0, 1] *= sign
    M[1, 0] *= sign
    return M


def equilibrated_cond(M: np.ndarray) -> float:
    """2-norm condition number after scaling each row to unit max-modulus."""
    scale = np.max(np.abs(M), axis=1, keepdims=True)
    if np.any(scale == 0) or not np.all(np.isfinite(M)):
        return float("inf")
    return float(np.linalg.cond(M / scale))


def solve_pair(probe, spec: HilbertSpec, Z_at_phi: complex, Z_at_phibar: complex,
               phi_A: float, mu: int) -> PairSolution:
    """Solve for (M_sys(phi_A; mu), M_sys(phi_A; mu - d)), 1 <= mu <= d-1."""
    mu = int(mu)
    if not 1 <= mu <= spec.d - 1:
        raise ValueError(f"mu must be in [1, {spec.d - 1}], got {mu}")
    M = pair_matrix(probe, spec, phi_A, mu)
    z = np.array([Z_at_phi, Z_at_phibar], dtype=complex)
    if np.all(M[:, 1] == 0):
        # the partner coefficient underflowed: the first equation alone fixes x
        # exactly, y stays undetermined
        return PairSolution(complex(z[0] / M[0, 0]), complex("nan"), 1.0, False)
    cond = equilibrated_cond(M)
    if not np.isfinite(cond):
        sol = np.linalg.lstsq(M, z, rcond=None)[0]
    else:
        scale = np.max(np.abs(M), axis=1)
        sol = np.linalg.solve(M / scale[:, None], z / scale)
    return PairSolution(complex(sol[0]), complex(sol[1]), cond, bool(cond > COND_LIMIT))


def apply_readout_deblur(Z_values, phis, z0: Callable | None):
    """Divide the characteristic function by the known readout factor z0(phi)."""
    Z_values = np.asarray(Z_values, dtype=complex)
    if z0 is None:
        return Z_values
    phis = np.asarray(phis, dtype=float)
    factor = np.asarray(z0(phis), dtype=complex)
    bad = np.abs(factor) <= MIN_BLUR
    if np.any(bad):
        raise UnrecoverableFrequencyError(phis[bad])
    return Z_values / factor


def _simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-and-threshold)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    k = np.arange(1, v.size + 1)
    active = np.nonzero(u - css / k > 0)[0]
    last = active[-1] if active.size else 0
    theta = css[last] / (last + 1)
    w = np.maximum(v - theta, 0)
    total = w.sum()
    if total > 0 and np.isfinite(total):
        return w / total
    # huge-magnitude spectra cancel to nothing; the limit is the top vertex
    w = np.zeros_like(v)
    w[np.argmax(v)] = 1.0
    return w


def project_to_density(raw, spec: HilbertSpec | None = None) -> DensityMatrix:
    """Nearest density matrix in Frobenius norm: project the spectrum of the
    Hermitian part onto the probability simplex."""
    raw = np.asarray(raw, dtype=complex)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(raw)):
        raise ValueError("matrix has non-finite entries")
    spec = spec or HilbertSpec(raw.shape[0])
    H = (raw + raw.conj().T) / 2
    w, V = np.linalg.eigh(H)
    if w.min() >= 0 and abs(w.sum() - 1) < 1e-14:
        return DensityMatrix(spec, H)
    p = _simplex(w)
    rho = (V * p) @ V.conj().T
    return DensityMatrix(spec, (rho + rho.conj().T) / 2)


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((a + a.conj().T) / 2)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def fidelity(rho1, rho2) -> float:
    """(tr sqrt(sqrt(r1) r2 sqrt(r1)))^2."""
    a = getattr(rho1, "entries", rho1)
    b = getattr(rho2, "entries", rho2)
    s = _psd_sqrt(a)
    inner = np.linalg.eigvalsh((s @ b @ s + (s @ b @ s).conj().T) / 2)
    return float(np.clip(np.sum(np.sqrt(np.clip(inner, 0, None))) ** 2, 0, 1))


def trace_distance(rho1, rho2) -> float:
    a = getattr(rho1, "entries", rho1)
    b = getattr(rho2, "entries", rho2)
    diff = a - b
    return float(np.clip(0.5 * np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum(), 0, 1))


@dataclass
class ReconstructionOptions:
    z0: Callable | None = None
    diagonal_only: bool = False
    truth: DensityMatrix | None = None
    min_probe_moyal: float = MIN_PROBE_MOYAL


@dataclass
class ReconstructionResult:
    rho_raw: np.ndarray
    rho_projected: DensityMatrix
    table: MoyalTable = field(repr=False)
    diagnostics: list[dict] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def flagged(self) -> list[dict]:
        return [row for row in self.diagnostics if row.get("ill_conditioned")]

    def to_json(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not np.isfinite(v):
                return str(v)
            return v
        return {
            "d": self.rho_projected.spec.d,
            "l0": self.rho_projected.spec.l0,
            "rho_raw": matrix_to_pairs(self.rho_raw),
            "rho_projected": matrix_to_pairs(self.rho_projected.entries),
            "diagnostics": [{k: clean(v) for k, v in row.items()} for row in self.diagnostics],
            "metrics": {k: clean(v) for k, v in self.metrics.items()},
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    def write_summary_csv(self, path: str | Path, descriptor_hash: str | None = None) -> None:
        cols = ["mu", "mbarA_doubled", "phiA", "route", "cond", "residual", "discrepancy", "ill_conditioned"]
        with open(path, "w") as fh:
            if descriptor_hash:
                fh.write(f"# descriptor_hash={descriptor_hash}\n")
            fh.write(",".join(cols) + "\n")
            for row in self.diagnostics:
                fh.write(",".join(_fmt(row.get(c, "")) for c in cols) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _char_function(source, probe, spec):
    if isinstance(source, OutcomeSet):
        return lambda phi: empirical_char(source, phi)
    if isinstance(source, DensityMatrix):
        return ExactSource(source, probe, spec)
    if callable(source):
        return source
    raise TypeError(f"cannot use {type(source).__name__} as a characteristic-function source")


def reconstruct(source, probe, spec: HilbertSpec, options: ReconstructionOptions | None = None) -> ReconstructionResult:
    """Recover the system state from Z(phi) and the probe calibration.

    ``source`` is an :class:`OutcomeSet`, an :class:`ExactSource`, a known
    :class:`DensityMatrix` (shorthand for its exact source) or any callable
    ``phi -> Z(phi)``.
    """
    opts = options or ReconstructionOptions()
    Z = _char_function(source, probe, spec)
    d = spec.d
    table = MoyalTable(spec)
    diagnostics: list[dict] = []

    # diagonal mu = 0: a single term survives at phi_B = 0
    keys0 = mbar_grid(spec, 0).mbar2
    phis0 = np.array([[inversion_phase(spec, 0, k), 0.0] for k in keys0])
    z_0 = apply_readout_deblur(Z(phis0), phis0, opts.z0)
    pr0 = probe.moyal_pr(phis0, np.zeros_like(phis0))
    weak = np.abs(pr0) < opts.min_probe_moyal
    if np.any(weak):
        raise ProbeInsensitivityError(phis0[weak, 0])
    for k, zval, pval, phi in zip(keys0, z_0, pr0, phis0[:, 0]):
        table[0, k] = zval / pval
        diagnostics.append({"mu": 0, "mbarA_doubled": k, "phiA": float(phi), "route": "direct",
                            "cond": 1.0, "residual": 0.0, "discrepancy": 0.0, "ill_conditioned": False,
                            "probe_moyal": float(abs(pval))})

    if opts.diagonal_only:
        for mu in range(1, d):
            for k in mbar_grid(spec, mu).mbar2:
                table[mu, k] = 0.0
    else:
        _fill_off_diagonals(Z, probe, spec, opts, table, diagnostics)

    rho_raw = invert_moyal(table)
    rho_proj = project_to_density(rho_raw, spec)
    metrics = {
        "trace_raw": float(np.trace(rho_raw).real),
        "hermiticity_violation": float(np.max(np.abs(rho_raw - rho_raw.conj().T))),
        "max_cond": float(max((r["cond"] for r in diagnostics), default=1.0)),
        "n_ill_conditioned": sum(bool(r["ill_conditioned"]) for r in diagnostics),
        "max_discrepancy": float(max((r["discrepancy"] for r in diagnostics if np.isfinite(r["discrepancy"])), default=0.0)),
    }
    if opts.truth is not None:
        truth = opts.truth.entries
        metrics.update({
            "max_abs_error_raw": float(np.max(np.abs(rho_raw - truth))),
            "fidelity": fidelity(rho_proj, opts.truth),
            "trace_distance": trace_distance(rho_proj, opts.truth),
            "trace_distance_raw": float(0.5 * np.abs(np.linalg.eigvalsh(
                ((rho_raw + rho_raw.conj().T) / 2) - truth)).sum()),
        })
    return ReconstructionResult(rho_raw, rho_proj, table, diagnostics, metrics)


def _fill_off_diagonals(Z, probe, spec, opts, table, diagnostics):
    d, a0 = spec.d, spec.a0
    # every system mu is solved at its own grid (direct route for diagonal mu)
    # and at minus the grid of diagonal d - mu (mirror route for that diagonal)
    requests = []
    for mu in range(1, d):
        for k in mbar_grid(spec, mu).mbar2:
            requests.append((mu, mu, k, inversion_phase(spec, mu, k), "direct"))
        for k in mbar_grid(spec, d - mu).mbar2:
            requests.append((mu, d - mu, k, -inversion_phase(spec, d - mu, k), "mirror"))
    phi_pts = np.array([[phi, mu * a0] for mu, _, _, phi, _ in requests]
                       + [[phi, partner_mu(spec, mu) * a0] for mu, _, _, phi, _ in requests])
    zs = apply_readout_deblur(Z(phi_pts), phi_pts, opts.z0)
    n = len(requests)

    routes: dict[tuple[int, int], list] = {}
    for i, (mu, target, k, phi, route) in enumerate(requests):
        sol = solve_pair(probe, spec, zs[i], zs[n + i], phi, mu)
        M = pair_matrix(probe, spec, phi, mu)
        if np.isfinite(sol.y):
            resid = float(np.max(np.abs(M @ np.array([sol.x, sol.y]) - np.array([zs[i], zs[n + i]]))))
        else:
            resid = float(abs(M[0, 0] * sol.x - zs[i]))
        value = sol.x if route == "direct" else np.conj(sol.y)
        row = {"mu": mu, "mbarA_doubled": k, "phiA": float(phi), "route": route, "target_mu": target,
               "cond": sol.cond, "residual": resid, "discrepancy": 0.0, "ill_conditioned": sol.ill_conditioned}
        diagnostics.append(row)
        routes.setdefault((target, k), []).append((value, sol.cond, row))

    for (target, k), found in routes.items():
        vals = np.array([v for v, _, _ in found], dtype=complex)
        conds = np.array([c for _, c, _ in found])
        ok = np.isfinite(vals)
        weights = np.where(ok & np.isfinite(conds), 1.0 / np.where(np.isfinite(conds), conds, 1.0), 0.0)
        if weights.sum() > 0:
            value = np.sum(weights * np.where(ok, vals, 0)) / weights.sum()
        elif ok.any():
            value = vals[ok][0]
        else:
            value = complex("nan")
        good = vals[ok]
        disc = float(np.max(np.abs(good - good[0]))) if good.size else float("nan")
        for _, _, row in found:
            row["discrepancy"] = disc
        table[target, k] = value
