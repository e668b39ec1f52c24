import json
import subprocess
import sys


from seqtomo.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main

BASE = """
[space]
d = {d}
[state]
kind = "random"
seed = 7
[probe]
sigma_A = {sigma}
sigma_B = {sigma}
[sampling]
n = {n}
seed = 3
[roundtrip]
dims = [2, 3, 4]
sigmas = [1.0]
ranks = [1, "full"]
[bench]
n_values = [1000, 10000, 100000]
seeds = 5
"""


def write(tmp_path, name="run.toml", d=2, sigma=0.5, n=10, extra=""):
    path = tmp_path / name
    path.write_text(BASE.format(d=d, sigma=sigma, n=n) + extra)
    return path


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# descriptor_hash=")
    return lines[1], lines[2:]


def test_simulate_minimal(tmp_path):
    cfg = write(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    header, rows = read_rows(tmp_path / "a" / "samples.csv")
    assert header == "J_A,J_B" and len(rows) == 10
    side = json.loads((tmp_path / "a" / "samples.json").read_text())
    assert side["seed"] == 3 and side["n"] == 10 and side["descriptor_hash"]
    truth = json.loads((tmp_path / "a" / "truth.json").read_text())
    assert truth["descriptor_hash"] == side["descriptor_hash"]


def test_simulate_byte_identical_across_threads(tmp_path):
    cfg = write(tmp_path, d=3, n=200_000)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "4"])
    assert (tmp_path / "a" / "samples.csv").read_bytes() == (tmp_path / "b" / "samples.csv").read_bytes()


def test_seed_override_changes_hash(tmp_path):
    cfg = write(tmp_path, n=20)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "9"])
    a, b = (tmp_path / "a" / "samples.csv").read_text(), (tmp_path / "b" / "samples.csv").read_text()
    assert a.splitlines()[0] != b.splitlines()[0] and a != b


def test_reconstruct_exact_d4(tmp_path, capsys):
    cfg = write(tmp_path, d=4, sigma=1.0)
    assert main(["reconstruct", "--config", str(cfg), "--exact", "--out", str(tmp_path)]) == EXIT_OK
    res = json.loads((tmp_path / "reconstruction.json").read_text())
    assert res["metrics"]["max_abs_error_raw"] < 1e-8
    assert res["mode"] == "exact" and res["descriptor_hash"]
    header, rows = read_rows(tmp_path / "summary.csv")
    assert header.startswith("mu,mbarA_doubled") and rows


def test_reconstruct_from_samples(tmp_path):
    cfg = write(tmp_path, n=50_000)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
    assert main(["reconstruct", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    metrics = json.loads((tmp_path / "reconstruction.json").read_text())["metrics"]
    assert {"fidelity", "trace_distance"} <= metrics.keys()
    assert metrics["trace_distance"] < 0.1


def test_missing_samples_is_config_error(tmp_path):
    cfg = write(tmp_path)
    assert main(["reconstruct", "--config", str(cfg), "--out", str(tmp_path / "empty")]) == EXIT_CONFIG


def test_probe_insensitivity_exit_code(tmp_path):
    cfg = write(tmp_path, d=3, sigma=5.0)
    assert main(["reconstruct", "--config", str(cfg), "--exact", "--out", str(tmp_path)]) == EXIT_NUMERIC
    record = json.loads((tmp_path / "error.json").read_text())
    assert record["error"] == "ProbeInsensitivityError" and record["phi"] and record["descriptor_hash"]


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, d=1)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["path"] == "space.d"
    assert main(["simulate", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(cfg), "--threads", "0"]) == EXIT_CONFIG


def test_roundtrip_exact(tmp_path):
    cfg = write(tmp_path)
    assert main(["roundtrip", "--config", str(cfg), "--exact", "--out", str(tmp_path)]) == EXIT_OK
    header, rows = read_rows(tmp_path / "roundtrip.csv")
    assert header.split(",")[:3] == ["d", "sigma", "rank"]
    assert len(rows) == 6
    for row in rows:
        cells = row.split(",")
        assert float(cells[4]) < 1e-8 and cells[-1] == "ok"


def test_compare_leonhardt(tmp_path):
    assert main(["compare-leonhardt", "--out", str(tmp_path), "--n-phi", "10"]) == EXIT_OK
    header, rows = read_rows(tmp_path / "leonhardt.csv")
    assert header == "d,mu,phi,residual"
    assert {int(r.split(",")[0]) for r in rows} == set(range(2, 10))
    assert max(float(r.split(",")[3]) for r in rows) < 1e-12
    assert main(["compare-leonhardt", "--out", str(tmp_path), "--dims", "1,2"]) == EXIT_CONFIG
    assert main(["compare-leonhardt", "--out", str(tmp_path), "--dims", "x"]) == EXIT_CONFIG


def test_bench(tmp_path):
    cfg = write(tmp_path, n=10)
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    header, rows = read_rows(tmp_path / "bench.csv")
    assert header == "N,median_trace_distance,fitted_slope"
    med = [float(r.split(",")[1]) for r in rows]
    assert len(med) == 3 and all(a >= b for a, b in zip(med, med[1:]))
    assert -0.8 < float(rows[0].split(",")[2]) < -0.2


def test_env_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv("SEQTOMO_OUT", str(tmp_path / "envout"))
    cfg = write(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "envout" / "samples.csv").exists()


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "seqtomo", "simulate", "--config", str(cfg), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "seqtomo", "simulate", "--config", str(tmp_path / "none.toml")],
                         capture_output=True, text=True)
    assert bad.returncode == EXIT_CONFIG
