"""Run descriptor: one TOML file fully determines a run."""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import DensityMatrix, HilbertSpec, bloch_density, random_density
from .probes import GridProbe, gaussian_from_widths


# low noise amplification for sample-based runs at small d
DEFAULT_SIGMA_A, DEFAULT_SIGMA_B = 0.5, 0.3
DEFAULT_ENTANGLEMENT = 0.5
MAX_GRID_POINTS = 8192


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class StateSource:
    kind: str = "random"
    rank: int | None = None
    seed: int = 0
    path: str | None = None
    bloch: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class ProbeSource:
    kind: str = "gaussian"
    sigma_A: float = DEFAULT_SIGMA_A
    sigma_B: float = DEFAULT_SIGMA_B
    units: str = "natural"
    corr: float = 0.0
    kappa: float | None = None
    entanglement: float | None = None
    path: str | None = None


@dataclass(frozen=True)
class Sampling:
    n: int = 10000
    seed: int = 0
    backend: str = "auto"
    grid_points: int = 1024


@dataclass(frozen=True)
class Reconstruction:
    source: str = "samples"
    blur_width: float = 0.0


@dataclass(frozen=True)
class Sweep:
    dims: tuple[int, ...] = (2, 3, 4)
    sigmas: tuple[float, ...] = (0.2, 1.0, 5.0)
    ranks: tuple[Any, ...] = (1, "full")
    seed: int = 0


@dataclass(frozen=True)
class Bench:
    n_values: tuple[int, ...] = (1000, 10000, 100000)
    seeds: int = 10


@dataclass(frozen=True)
class RunDescriptor:
    d: int
    l0: float = 1.0
    state: StateSource = field(default_factory=StateSource)
    probe: ProbeSource = field(default_factory=ProbeSource)
    sampling: Sampling = field(default_factory=Sampling)
    reconstruction: Reconstruction = field(default_factory=Reconstruction)
    roundtrip: Sweep = field(default_factory=Sweep)
    bench: Bench = field(default_factory=Bench)
    output_dir: str | None = None
    base_dir: str = "."

    @property
    def spec(self) -> HilbertSpec:
        return HilbertSpec(self.d, self.l0)

    def canonical(self) -> dict:
        out = asdict(self)
        out.pop("output_dir")
        out.pop("base_dir")
        return out

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def build_state(self) -> DensityMatrix:
        st = self.state
        if st.kind == "random":
            return random_density(self.spec, st.rank or self.d, st.seed)
        if st.kind == "bloch":
            return bloch_density(st.bloch, self.l0)
        rho = DensityMatrix.load(self.resolve(st.path))
        if rho.spec.d != self.d:
            raise ConfigError("state.path", f"matrix has d={rho.spec.d}, descriptor has d={self.d}")
        return DensityMatrix(self.spec, rho.entries)

    def build_probe(self, spec: HilbertSpec | None = None):
        return build_probe(self.probe, spec or self.spec, self.base_dir)


def build_probe(pr: ProbeSource, spec: HilbertSpec, base_dir: str = "."):
    if pr.kind == "grid":
        path = Path(pr.path)
        return GridProbe.load(path if path.is_absolute() else Path(base_dir) / path)
    sA, sB = pr.sigma_A, pr.sigma_B
    if pr.units == "natural":
        sA, sB = sA * spec.a0, sB * spec.b0
    kappa = pr.kappa
    if pr.entanglement is not None:
        kappa = pr.entanglement / (sA * sB)
    return gaussian_from_widths(sA, sB, pr.corr or None, kappa)


# -- validation ---------------------------------------------------------------

def _take(table: dict, key: str, path: str, kinds, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}".lstrip("."), "required field is missing")
        return default
    value = table[key]
    kinds = kinds if isinstance(kinds, tuple) else (kinds,)
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected {_names(kinds)}, got a boolean")
    if not isinstance(value, kinds):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected {_names(kinds)}, got {type(value).__name__}")
    return value


def _names(kinds) -> str:
    return " or ".join(k.__name__ for k in kinds)


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected a table")
    return sec


def _reject_unknown(table: dict, allowed: set[str], path: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}".lstrip("."), "unknown field")


def _positive(value, path: str, strict=True):
    if not math.isfinite(value) or value < 0 or (strict and value == 0):
        raise ConfigError(path, f"must be {'positive' if strict else 'non-negative'}, got {value!r}")
    return value


NUM = (int, float)


def parse_descriptor(raw: dict, base_dir: str = ".") -> RunDescriptor:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a table")
    _reject_unknown(raw, {"space", "state", "probe", "sampling", "reconstruction", "roundtrip", "bench", "output"}, "")

    space = _section(raw, "space")
    _reject_unknown(space, {"d", "l0"}, "space")
    d = _take(space, "d", "space", int, required=True)
    if d < 2:
        raise ConfigError("space.d", f"must be >= 2, got {d}")
    l0 = float(_positive(_take(space, "l0", "space", NUM, 1.0), "space.l0"))

    st = _section(raw, "state")
    _reject_unknown(st, {"kind", "rank", "seed", "path", "bloch"}, "state")
    kind = _take(st, "kind", "state", str, "random")
    if kind not in ("random", "matrix", "bloch"):
        raise ConfigError("state.kind", f"must be random, matrix or bloch, got {kind!r}")
    rank = _take(st, "rank", "state", int, None)
    if rank is not None and not 1 <= rank <= d:
        raise ConfigError("state.rank", f"must be in [1, {d}], got {rank}")
    seed = _take(st, "seed", "state", int, 0)
    if seed < 0:
        raise ConfigError("state.seed", "must be non-negative")
    path = _take(st, "path", "state", str, None)
    if kind == "matrix" and path is None:
        raise ConfigError("state.path", "required when state.kind = 'matrix'")
    bloch = _take(st, "bloch", "state", list, None)
    if kind == "bloch":
        if d != 2:
            raise ConfigError("state.kind", "bloch states need space.d = 2")
        if bloch is None or len(bloch) != 3 or not all(isinstance(x, NUM) and not isinstance(x, bool) for x in bloch):
            raise ConfigError("state.bloch", "expected three numbers")
        if sum(float(x) ** 2 for x in bloch) > 1 + 1e-12:
            raise ConfigError("state.bloch", "Bloch vector must have norm <= 1")
        bloch = tuple(float(x) for x in bloch)
    state = StateSource(kind, rank, seed, path, bloch if kind == "bloch" else None)

    pr = _section(raw, "probe")
    _reject_unknown(pr, {"kind", "sigma_A", "sigma_B", "units", "corr", "kappa", "entanglement", "path"}, "probe")
    pkind = _take(pr, "kind", "probe", str, "gaussian")
    if pkind not in ("gaussian", "grid"):
        raise ConfigError("probe.kind", f"must be gaussian or grid, got {pkind!r}")
    sA = float(_positive(_take(pr, "sigma_A", "probe", NUM, DEFAULT_SIGMA_A), "probe.sigma_A"))
    sB = float(_positive(_take(pr, "sigma_B", "probe", NUM, DEFAULT_SIGMA_B), "probe.sigma_B"))
    units = _take(pr, "units", "probe", str, "natural")
    if units not in ("natural", "absolute"):
        raise ConfigError("probe.units", f"must be natural or absolute, got {units!r}")
    corr = float(_take(pr, "corr", "probe", NUM, 0.0))
    if not abs(corr) < 1:
        raise ConfigError("probe.corr", f"must satisfy |corr| < 1, got {corr}")
    kappa = _take(pr, "kappa", "probe", NUM, None)
    ent = _take(pr, "entanglement", "probe", NUM, None)
    if kappa is not None and ent is not None:
        raise ConfigError("probe.kappa", "give either kappa or entanglement, not both")
    if kappa is None and ent is None:
        # product probes leave the off-diagonal solve singular
        ent = DEFAULT_ENTANGLEMENT
    for name, v in (("kappa", kappa), ("entanglement", ent)):
        if v is not None and not math.isfinite(v):
            raise ConfigError(f"probe.{name}", "must be finite")
    ppath = _take(pr, "path", "probe", str, None)
    if pkind == "grid" and ppath is None:
        raise ConfigError("probe.path", "required when probe.kind = 'grid'")
    probe = ProbeSource(pkind, sA, sB, units, corr, None if kappa is None else float(kappa),
                        None if ent is None else float(ent), ppath)

    sm = _section(raw, "sampling")
    _reject_unknown(sm, {"n", "seed", "backend", "grid_points"}, "sampling")
    n = _take(sm, "n", "sampling", int, 10000)
    if n < 1:
        raise ConfigError("sampling.n", f"must be >= 1, got {n}")
    sseed = _take(sm, "seed", "sampling", int, 0)
    if sseed < 0:
        raise ConfigError("sampling.seed", "must be non-negative")
    backend = _take(sm, "backend", "sampling", str, "auto")
    if backend not in ("auto", "kraus", "grid"):
        raise ConfigError("sampling.backend", f"must be auto, kraus or grid, got {backend!r}")
    gp = _take(sm, "grid_points", "sampling", int, 1024)
    if not 16 <= gp <= MAX_GRID_POINTS:
        raise ConfigError("sampling.grid_points", f"must be in [16, {MAX_GRID_POINTS}]")
    sampling = Sampling(n, sseed, backend, gp)

    rc = _section(raw, "reconstruction")
    _reject_unknown(rc, {"source", "blur_width"}, "reconstruction")
    src = _take(rc, "source", "reconstruction", str, "samples")
    if src not in ("samples", "exact"):
        raise ConfigError("reconstruction.source", f"must be samples or exact, got {src!r}")
    blur = float(_positive(_take(rc, "blur_width", "reconstruction", NUM, 0.0), "reconstruction.blur_width", strict=False))
    recon = Reconstruction(src, blur)

    rt = _section(raw, "roundtrip")
    _reject_unknown(rt, {"dims", "sigmas", "ranks", "seed"}, "roundtrip")
    dims = _int_list(rt, "dims", "roundtrip", (2, 3, 4), minimum=2)
    sigmas = tuple(float(_positive(s, f"roundtrip.sigmas[{i}]"))
                   for i, s in enumerate(_num_list(rt, "sigmas", "roundtrip", (0.2, 1.0, 5.0))))
    ranks = _take(rt, "ranks", "roundtrip", list, [1, "full"])
    for i, r in enumerate(ranks):
        if not (r == "full" or (isinstance(r, int) and not isinstance(r, bool) and r >= 1)):
            raise ConfigError(f"roundtrip.ranks[{i}]", "must be a positive integer or 'full'")
    rseed = _take(rt, "seed", "roundtrip", int, 0)
    sweep = Sweep(dims, sigmas, tuple(ranks), rseed)

    bn = _section(raw, "bench")
    _reject_unknown(bn, {"n_values", "seeds"}, "bench")
    nvals = _int_list(bn, "n_values", "bench", (1000, 10000, 100000), minimum=1)
    seeds = _take(bn, "seeds", "bench", int, 10)
    if seeds < 1:
        raise ConfigError("bench.seeds", "must be >= 1")
    bench = Bench(nvals, seeds)

    out = _section(raw, "output")
    _reject_unknown(out, {"dir"}, "output")
    odir = _take(out, "dir", "output", str, None)

    desc = RunDescriptor(d, l0, state, probe, sampling, recon, sweep, bench, odir, str(base_dir))
    if pkind == "gaussian":
        try:
            desc.build_probe()
        except ValueError as exc:
            raise ConfigError("probe", str(exc)) from exc
    return desc


def _int_list(table, key, path, default, minimum):
    vals = _take(table, key, path, list, list(default))
    for i, v in enumerate(vals):
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            raise ConfigError(f"{path}.{key}[{i}]", f"must be an integer >= {minimum}")
    if not vals:
        raise ConfigError(f"{path}.{key}", "must not be empty")
    return tuple(vals)


def _num_list(table, key, path, default):
    vals = _take(table, key, path, list, list(default))
    for i, v in enumerate(vals):
        if not isinstance(v, NUM) or isinstance(v, bool):
            raise ConfigError(f"{path}.{key}[{i}]", "must be a number")
    if not vals:
        raise ConfigError(f"{path}.{key}", "must not be empty")
    return vals


def load_descriptor(path: str | Path) -> RunDescriptor:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"{path} not found")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from exc
    return parse_descriptor(raw, str(path.parent))
