"""Command-line driver: simulate, reconstruct, roundtrip, compare-leonhardt, bench."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunDescriptor, build_probe, load_descriptor
from .core import HilbertSpec, random_density
from .forward import OutcomeSet, blur_outcomes, gaussian_blur_factor, make_sampler, sample_outcomes
from .leonhardt import residual_rows
from .reconstruct import (ExactSource, ProbeInsensitivityError, ReconstructionOptions,
                          UnrecoverableFrequencyError, reconstruct)

log = logging.getLogger("seqtomo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
OUT_ENV = "SEQTOMO_OUT"


def _out_dir(args, desc: RunDescriptor | None) -> Path:
    raw = args.out or (desc.output_dir and str(desc.resolve(desc.output_dir))) or os.environ.get(OUT_ENV) or "seqtomo-out"
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _descriptor(args) -> RunDescriptor:
    if not args.config:
        raise ConfigError("--config", "a run descriptor is required")
    desc = load_descriptor(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be non-negative")
        desc = replace(desc, sampling=replace(desc.sampling, seed=args.seed))
    return desc


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _csv(path: Path, header: list[str], rows, tag: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# descriptor_hash={tag}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def _simulate(desc: RunDescriptor, threads: int, sampler=None) -> OutcomeSet:
    spec = desc.spec
    rho = desc.build_state()
    probe = desc.build_probe()
    sm = desc.sampling
    outcomes = sample_outcomes(rho, probe, spec, sm.n, sm.seed, backend=sm.backend, threads=threads,
                               sampler=sampler, **({"n_points": sm.grid_points} if sm.backend != "kraus" else {}))
    if desc.reconstruction.blur_width > 0:
        outcomes = blur_outcomes(outcomes, desc.reconstruction.blur_width, sm.seed)
    outcomes.descriptor_hash = desc.hash()
    return outcomes


def cmd_simulate(args) -> int:
    desc = _descriptor(args)
    out = _out_dir(args, desc)
    outcomes = _simulate(desc, args.threads)
    outcomes.write_csv(out / "samples.csv")
    truth = desc.build_state().to_json()
    truth["descriptor_hash"] = desc.hash()
    _write_json(out / "truth.json", truth)
    _write_json(out / "descriptor.json", {"descriptor_hash": desc.hash(), **desc.canonical()})
    log.info("wrote %d samples to %s", len(outcomes), out / "samples.csv")
    return EXIT_OK


def _reconstruct_once(desc: RunDescriptor, source, truth):
    spec = desc.spec
    probe = desc.build_probe()
    z0 = gaussian_blur_factor(desc.reconstruction.blur_width) if desc.reconstruction.blur_width > 0 else None
    return reconstruct(source, probe, spec, ReconstructionOptions(z0=z0, truth=truth))


def cmd_reconstruct(args) -> int:
    desc = _descriptor(args)
    out = _out_dir(args, desc)
    truth = desc.build_state()
    exact = args.exact or desc.reconstruction.source == "exact"
    if exact:
        source = ExactSource(truth, desc.build_probe(), desc.spec)
        w = desc.reconstruction.blur_width
        if w > 0:
            blur = gaussian_blur_factor(w)
            plain = source
            source = lambda phi: plain(phi) * blur(phi)  # noqa: E731
    else:
        path = Path(args.samples) if args.samples else out / "samples.csv"
        if not path.exists():
            raise ConfigError("--samples", f"{path} does not exist; run `simulate` first")
        source = OutcomeSet.read_csv(path)
    try:
        result = _reconstruct_once(desc, source, truth)
    except (ProbeInsensitivityError, UnrecoverableFrequencyError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "descriptor_hash": desc.hash(),
                  "phi": [list(p) if isinstance(p, tuple) else float(p) for p in exc.phis]}
        _write_json(out / "error.json", record)
        print(json.dumps(record), file=sys.stderr)
        return EXIT_NUMERIC
    payload = result.to_json()
    payload["descriptor_hash"] = desc.hash()
    payload["mode"] = "exact" if exact else "samples"
    _write_json(out / "reconstruction.json", payload)
    result.write_summary_csv(out / "summary.csv", desc.hash())
    print(json.dumps(result.to_json()["metrics"], sort_keys=True))
    return EXIT_OK


def _rank_value(r, d: int) -> int:
    return d if r == "full" else min(int(r), d)


def cmd_roundtrip(args) -> int:
    desc = _descriptor(args)
    out = _out_dir(args, desc)
    exact = args.exact or desc.reconstruction.source == "exact"
    rows = []
    for d in desc.roundtrip.dims:
        spec = HilbertSpec(d, desc.l0)
        for sigma in desc.roundtrip.sigmas:
            pr_source = replace(desc.probe, sigma_A=sigma, sigma_B=sigma) if desc.probe.kind == "gaussian" else desc.probe
            probe = build_probe(pr_source, spec, desc.base_dir)
            for r in desc.roundtrip.ranks:
                rank = _rank_value(r, d)
                rho = random_density(spec, rank, desc.roundtrip.seed + 1000 * d + rank)
                if exact:
                    source = ExactSource(rho, probe, spec)
                else:
                    source = sample_outcomes(rho, probe, spec, desc.sampling.n, desc.sampling.seed,
                                             backend=desc.sampling.backend, threads=args.threads)
                try:
                    res = reconstruct(source, probe, spec, ReconstructionOptions(truth=rho))
                except ProbeInsensitivityError:
                    rows.append((d, sigma, rank, "exact" if exact else "samples", "nan", "nan", "nan", 0, "probe_insensitive"))
                    continue
                m = res.metrics
                status = "flagged" if m["n_ill_conditioned"] else "ok"
                rows.append((d, sigma, rank, "exact" if exact else "samples", m["max_abs_error_raw"],
                             m["trace_distance"], m["fidelity"], m["n_ill_conditioned"], status))
    _csv(out / "roundtrip.csv",
         ["d", "sigma", "rank", "mode", "max_abs_error", "trace_distance", "fidelity", "n_flagged", "status"],
         rows, desc.hash())
    return EXIT_OK


def cmd_compare_leonhardt(args) -> int:
    out = _out_dir(args, None)
    try:
        dims = [int(x) for x in args.dims.split(",")] if args.dims else list(range(2, 10))
    except ValueError:
        raise ConfigError("--dims", f"expected comma-separated integers, got {args.dims!r}") from None
    if any(d < 2 for d in dims):
        raise ConfigError("--dims", "dimensions must be >= 2")
    if args.n_phi < 1:
        raise ConfigError("--n-phi", "must be >= 1")
    rng = np.random.default_rng(args.seed or 0)
    rows = []
    for d in dims:
        spec = HilbertSpec(d)
        rho = random_density(spec, d, int(rng.integers(2**32)))
        rows += residual_rows(rho, spec, rng.uniform(-2 * np.pi, 2 * np.pi, args.n_phi))
    tag = f"leonhardt:{','.join(map(str, dims))}:{args.seed or 0}:{args.n_phi}"
    _csv(out / "leonhardt.csv", ["d", "mu", "phi", "residual"], rows, tag)
    worst = max(r[3] for r in rows)
    print(json.dumps({"max_residual": worst, "rows": len(rows)}))
    return EXIT_OK


def convergence_slope(ns, errors) -> float:
    """Least-squares slope of log(error) against log(N)."""
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(errors, dtype=float)), 1)[0])


def run_bench(desc: RunDescriptor, threads: int = 1) -> list[tuple]:
    spec = desc.spec
    rho = desc.build_state()
    probe = desc.build_probe()
    sm = desc.sampling
    opts = {"n_points": sm.grid_points} if sm.backend != "kraus" else {}
    sampler = make_sampler(rho, probe, spec, sm.backend, **opts)
    medians = []
    for n in desc.bench.n_values:
        dists = []
        for s in range(desc.bench.seeds):
            outcomes = sample_outcomes(rho, probe, spec, n, sm.seed + s, threads=threads, sampler=sampler)
            res = reconstruct(outcomes, probe, spec, ReconstructionOptions(truth=rho))
            dists.append(res.metrics["trace_distance"])
        medians.append(float(np.median(dists)))
    slope = convergence_slope(desc.bench.n_values, medians) if len(medians) > 1 else float("nan")
    return [(n, med, slope) for n, med in zip(desc.bench.n_values, medians)]


def cmd_bench(args) -> int:
    desc = _descriptor(args)
    out = _out_dir(args, desc)
    rows = run_bench(desc, args.threads)
    _csv(out / "bench.csv", ["N", "median_trace_distance", "fitted_slope"], rows, desc.hash())
    print(json.dumps({"slope": rows[-1][2]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqtomo", description="Single-setup tomography from sequential conjugate measurements.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", metavar="PATH", help="TOML run descriptor")
        p.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV} or ./seqtomo-out)")
        p.add_argument("--seed", type=int, help="override the sampling seed")
        p.add_argument("--threads", type=int, default=1)
        return p

    common(sub.add_parser("simulate", help="sample readouts")).set_defaults(func=cmd_simulate)
    p = common(sub.add_parser("reconstruct", help="reconstruct the state"))
    p.add_argument("--exact", action="store_true", help="use the exact characteristic function")
    p.add_argument("--samples", metavar="CSV")
    p.set_defaults(func=cmd_reconstruct)
    p = common(sub.add_parser("roundtrip", help="sweep over dimension, probe width and rank"))
    p.add_argument("--exact", action="store_true")
    p.set_defaults(func=cmd_roundtrip)
    p = common(sub.add_parser("compare-leonhardt", help="residuals of the Leonhardt relations"), config=False)
    p.add_argument("--dims", help="comma-separated dimensions (default 2..9)")
    p.add_argument("--n-phi", type=int, default=50)
    p.set_defaults(func=cmd_compare_leonhardt)
    common(sub.add_parser("bench", help="Monte Carlo convergence study")).set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print(json.dumps({"error": "ConfigError", "message": "--threads: must be >= 1"}), file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "path": exc.path, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (ProbeInsensitivityError, UnrecoverableFrequencyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
