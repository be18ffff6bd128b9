import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from stabilitylab.analysis import pearson, zscore_normalize
from stabilitylab.cli import main
from stabilitylab.fitting import arch_model
from stabilitylab.io import read_spectrogram, write_arch_scan, write_spectrogram, write_t1_trace
from stabilitylab.measurement import (ArchScan, GridConfig, ReadoutModel, Spectrogram, SpectrogramMeta,
                                      SpectroscopyGrid, decay_probability, simulate_spectrogram)
from stabilitylab.model import BathPrior, FluxLine, TransmonParams, f01_max, initial_device

MINIMAL = """\
plan:
  qubits:
    - {name: Q1, ej_ghz: 14.0, ec_ghz: 0.21, t1_baseline_us: 60}
  n_cycles: 1
  session_hours: [1]
  root_seed: 7
grid:
  n_freq: 41
readout:
  shots: 100
  contrast: 0.9
  floor: 0.05
analysis:
  alpha: 0.002
"""

SMALL = """\
plan:
  n_qubits: 3
  n_cycles: 4
  session_hours: [1, 10, 100, 1000]
grid:
  n_freq: 61
readout:
  shots: 100
  contrast_jitter: 0.03
  floor_jitter: 0.01
t1_session:
  n_traces: 12
analysis:
  calibration_pairs: 12
"""


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    (root / "small.yaml").write_text(SMALL)
    assert main(["simulate", "--config", str(root / "small.yaml"), "--out", str(root / "out")]) == 0
    return root / "out"


def test_simulate_minimal_inventory(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text(MINIMAL)
    code, out, _ = run(["simulate", "--config", tmp_path / "c.yaml", "--out", tmp_path / "o"], capsys)
    assert code == 0
    files = sorted(str(p.relative_to(tmp_path / "o")) for p in (tmp_path / "o").rglob("*") if p.is_file())
    assert files == ["deviations.csv", "manifest.json", "spectrograms/Q1_c1_s0.stf", "stf.csv", "t1_stats.csv"]
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["alpha"] == 0.002 and len(manifest["config_sha256"]) == 64
    assert read_csv(tmp_path / "o" / "stf.csv") == [["qubit", "cycle_a", "session_a", "cycle_b", "session_b",
                                                     "dt_hours", "delta", "rho", "pearson", "kind"]]


def test_simulate_is_deterministic_and_seed_override(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text(SMALL.replace("n_qubits: 3", "n_qubits: 1"))
    for name in ("a", "b"):
        assert run(["simulate", "--config", tmp_path / "c.yaml", "--out", tmp_path / name, "--alpha", 0.002],
                   capsys)[0] == 0
    for table in ("deviations.csv", "t1_stats.csv", "stf.csv", "manifest.json"):
        assert (tmp_path / "a" / table).read_bytes() == (tmp_path / "b" / table).read_bytes()
    run(["simulate", "--config", tmp_path / "c.yaml", "--out", tmp_path / "s", "--seed", 5, "--alpha", 0.002],
        capsys)
    assert json.loads((tmp_path / "s" / "manifest.json").read_text())["seed"] == 5
    assert (tmp_path / "s" / "stf.csv").read_bytes() != (tmp_path / "a" / "stf.csv").read_bytes()


def test_simulate_config_errors_exit_2(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text(MINIMAL.replace("grid:\n  n_freq: 41\n", ""))
    code, _, err = run(["simulate", "--config", tmp_path / "c.yaml", "--out", tmp_path / "o"], capsys)
    assert code == 2 and "grid" in err
    code, _, err = run(["simulate", "--config", tmp_path / "nope.yaml", "--out", tmp_path / "o"], capsys)
    assert code == 2


def test_simulate_runtime_failure_exit_3(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text(MINIMAL)
    (tmp_path / "blocker").write_text("a file where the output dir should go")
    code, _, _ = run(["simulate", "--config", tmp_path / "c.yaml", "--out", tmp_path / "blocker"], capsys)
    assert code == 3


def analytic_map(seed, shape=None):
    p = TransmonParams(14.0, 0.2, 1 / 70)
    d = initial_device(p, FluxLine(0.1, 0.0), BathPrior(), seed)
    grid = GridConfig().build(f01_max(p))
    return simulate_spectrogram(d, grid, ReadoutModel(shots=0), 0, SpectrogramMeta("Q1", 1 + seed, 0.0))


def test_stf_identity_and_independent_baths(tmp_path, capsys):
    a, b = analytic_map(1), analytic_map(2)
    write_spectrogram(tmp_path / "a.stf", a)
    write_spectrogram(tmp_path / "b.stf", b)
    code, out, _ = run(["stf", tmp_path / "a.stf", tmp_path / "a.stf", "--alpha", 0.002], capsys)
    assert code == 0
    fields = dict(kv.split("=") for kv in out.split())
    assert float(fields["delta"]) == 0.0 and float(fields["rho"]) == pytest.approx(100.0)

    code, out, _ = run(["stf", tmp_path / "a.stf", tmp_path / "b.stf", "--alpha", 0.002], capsys)
    fields = dict(kv.split("=") for kv in out.split())
    r, n = float(fields["pearson"]), int(fields["n"])
    assert r == pytest.approx(pearson(zscore_normalize(read_spectrogram(tmp_path / "a.stf")),
                                      zscore_normalize(read_spectrogram(tmp_path / "b.stf"))), abs=1e-12)
    assert float(fields["rho"]) == pytest.approx(0.002 * np.sqrt(n / (2 * (1 - r))), rel=1e-9)


def test_stf_dimension_mismatch_and_degenerate(tmp_path, capsys):
    write_spectrogram(tmp_path / "a.stf", analytic_map(1))
    small = Spectrogram(SpectroscopyGrid(np.linspace(4.1, 4.2, 3), np.array([1.0, 2.0])), np.full((2, 3), 0.4))
    write_spectrogram(tmp_path / "flat.stf", small)
    assert run(["stf", tmp_path / "a.stf", tmp_path / "flat.stf", "--alpha", 0.002], capsys)[0] == 2
    assert run(["stf", tmp_path / "flat.stf", tmp_path / "flat.stf", "--alpha", 0.002], capsys)[0] == 4
    (tmp_path / "junk.stf").write_text("not a spectrogram\n")
    assert run(["stf", tmp_path / "junk.stf", tmp_path / "a.stf", "--alpha", 0.002], capsys)[0] == 2
    assert run(["stf", tmp_path / "a.stf", tmp_path / "a.stf"], capsys)[0] == 2


def test_calibrate_then_stf_with_calibration_dir(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text(MINIMAL)
    code, out, _ = run(["calibrate", "--config", tmp_path / "c.yaml", "--pairs", 12, "--out", tmp_path / "cal"],
                       capsys)
    assert code == 0 and "pairs=12" in out
    alpha = float(out.split()[0].split("=")[1])
    code, out, _ = run(["calibrate", "--replicas", tmp_path / "cal"], capsys)
    assert float(out.split()[0].split("=")[1]) == pytest.approx(alpha, rel=1e-6)
    files = sorted((tmp_path / "cal").iterdir())
    code, out, _ = run(["stf", files[0], files[1], "--calibration", tmp_path / "cal"], capsys)
    assert code == 0 and float(out.split()[1].split("=")[1]) > 0.5


def test_fit_commands(tmp_path, capsys):
    bias = np.linspace(-2.0, 4.0, 41)
    write_arch_scan(tmp_path / "arch.txt", ArchScan(bias, arch_model(bias, 4.53, 1.2, 0.2, 0.1), 0.0, 0.1))
    code, out, _ = run(["fit", "arch", tmp_path / "arch.txt"], capsys)
    vals = {line.split("=")[0]: float(line.split("=")[1].split()[0]) for line in out.splitlines()}
    assert code == 0
    assert vals["f01_max_ghz"] == pytest.approx(4.53, rel=1e-6)
    assert vals["bias_at_max_ma"] == pytest.approx(1.2, rel=1e-6)
    assert vals["ec_ghz"] == pytest.approx(0.2, rel=1e-6)

    write_arch_scan(tmp_path / "short.txt", ArchScan(bias[:3], arch_model(bias[:3], 4.53, 1.2, 0.2, 0.1), 0.0, 0.1))
    code, _, err = run(["fit", "arch", tmp_path / "short.txt"], capsys)
    assert code == 4 and "InsufficientPoints" in err

    d = np.geomspace(0.5, 300, 41)
    write_t1_trace(tmp_path / "t1.txt", d, decay_probability(d, 30.0, 0.9, 0.05)[:, 0])
    code, out, _ = run(["fit", "t1", tmp_path / "t1.txt"], capsys)
    assert code == 0 and out.startswith("t1_us=30.000000 ")

    write_t1_trace(tmp_path / "flat.txt", d, np.ones_like(d))
    code, _, err = run(["fit", "t1", tmp_path / "flat.txt"], capsys)
    assert code == 4


def test_report_tables(small_run, tmp_path, capsys):
    code, out, _ = run(["report", small_run, "--out", tmp_path / "plot"], capsys)
    assert code == 0
    stf_rows = read_csv(small_run / "stf.csv")
    inter = [float(r[7]) for r in stf_rows[1:] if r[9] == "inter"]
    plot = read_csv(tmp_path / "plot" / "stf_plot.csv")
    assert plot[0] == ["series", "qubit", "log10_dt_hours", "rho"]
    baseline = [r for r in plot if r[0] == "baseline"]
    assert len(baseline) == 1 and float(baseline[0][3]) == pytest.approx(np.mean(inter), rel=1e-12)
    assert {r[0] for r in plot[1:]} == {"intra", "inter", "intra_median", "baseline"}

    dev = read_csv(tmp_path / "plot" / "deviations_plot.csv")
    assert len(dev) - 1 == 3 * 4
    assert all(float(r[2]) == 0 and float(r[3]) == 0 for r in dev[1:] if r[1] == "1")
    t1 = read_csv(tmp_path / "plot" / "t1_plot.csv")
    assert len(t1) - 1 == 3 * 4 * 2


def test_report_rejects_bad_run_dirs(small_run, tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert run(["report", tmp_path / "empty"], capsys)[0] == 2
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.json").write_text("{not json")
    assert run(["report", bad], capsys)[0] == 2
    tampered = tmp_path / "tampered"
    shutil.copytree(small_run, tampered)
    assert run(["report", tampered], capsys)[0] == 0
    (tampered / "stf.csv").write_text("qubit\n")
    assert run(["report", tampered], capsys)[0] == 2


def test_module_entry_point_and_log_env(tmp_path):
    (tmp_path / "c.yaml").write_text(MINIMAL)
    proc = subprocess.run([sys.executable, "-m", "stabilitylab", "simulate", "--config", str(tmp_path / "c.yaml"),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True,
                          env={"STABILITYLAB_LOG": "INFO", "PATH": "/usr/bin:/bin"})
    assert proc.returncode == 0
    assert "INFO" in proc.stderr
