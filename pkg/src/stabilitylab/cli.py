"""Command-line entry point: ``stabilitylab {simulate,stf,calibrate,fit,report}``.

Exit codes: 0 success, 2 bad input (config, file format, usage), 3 runtime
failure, 4 numerical degeneracy (degenerate map, fit failure).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from itertools import groupby
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisConfig, StfReport, alpha_from_divergences, spectral_divergence, stf,
                       zscore_normalize)
from .errors import (ConfigError, ConvergenceFailure, DegenerateCalibration, DegenerateMap,
                     DimensionMismatch, FileFormatError, InsufficientPoints, InsufficientReplicas,
                     NonPositiveT1, StabilityLabError)
from .experiment import (StfMatrix, calibrate_plan_alpha, replica_pairs, run_longitudinal, stf_matrix,
                         summarize_decay)
from .fitting import fit_arch, fit_t1
from .io import (DEVIATION_COLUMNS, STF_COLUMNS, T1_STATS_COLUMNS, atomic_write_text, deviation_rows,
                 fmt_float, load_config, read_arch_scan, read_spectrogram, read_t1_trace, read_table,
                 sha256_file, spectrogram_filename, stf_rows, t1_stats_rows, write_spectrogram,
                 write_table)

log = logging.getLogger("stabilitylab")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3
EXIT_NUMERIC = 4

MANIFEST = "manifest.json"
TABLES = {"deviations": "deviations.csv", "t1_stats": "t1_stats.csv", "stf": "stf.csv"}
SPECTROGRAM_DIR = "spectrograms"

_NUMERIC = (DegenerateMap, DegenerateCalibration, ConvergenceFailure, InsufficientPoints, NonPositiveT1)
_INPUT = (ConfigError, FileFormatError, DimensionMismatch, InsufficientReplicas)


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("STABILITYLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _manifest_bytes(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def cmd_simulate(args) -> int:
    if args.config is None:
        raise UsageError("simulate needs --config")
    config_bytes = Path(args.config).read_bytes() if Path(args.config).is_file() else b""
    cfg = load_config(args.config, seed=args.seed)
    plan = cfg.plan
    out = Path(args.out)
    (out / SPECTROGRAM_DIR).mkdir(parents=True, exist_ok=True)

    log.info("simulating %d qubits x %d cycles x %d sessions", len(plan.qubits), plan.n_cycles,
             len(plan.session_hours))
    record = run_longitudinal(plan)
    if args.alpha is not None:
        alpha = args.alpha
    elif cfg.analysis.alpha is not None:
        alpha = cfg.analysis.alpha
    else:
        alpha = calibrate_plan_alpha(plan, cfg.analysis.calibration_pairs)
    acfg = AnalysisConfig(alpha, cfg.analysis.delta_floor)
    matrix = stf_matrix(record, acfg, cfg.analysis.inter)

    files = {}
    for s in record.sessions:
        if s.spectrogram is None:
            continue
        rel = f"{SPECTROGRAM_DIR}/{spectrogram_filename(s.spectrogram.meta)}"
        write_spectrogram(out / rel, s.spectrogram)
        files[rel] = sha256_file(out / rel)
    write_table(out / TABLES["deviations"], DEVIATION_COLUMNS, deviation_rows(record.deviations))
    write_table(out / TABLES["t1_stats"], T1_STATS_COLUMNS, t1_stats_rows(record))
    write_table(out / TABLES["stf"], STF_COLUMNS, stf_rows(matrix.reports))
    for name in TABLES.values():
        files[name] = sha256_file(out / name)

    manifest = {
        "format": "stabilitylab-run v1",
        "version": __version__,
        "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
        "seed": plan.root_seed,
        "alpha": alpha,
        "delta_floor": acfg.delta_floor,
        "n_qubits": len(plan.qubits),
        "n_cycles": plan.n_cycles,
        "session_hours": list(plan.session_hours),
        "flagged_sessions": len(record.flagged),
        "files": dict(sorted(files.items())),
    }
    atomic_write_text(out / MANIFEST, _manifest_bytes(manifest))
    print(f"wrote {len(record.sessions)} sessions to {out} (alpha={fmt_float(alpha)}, "
          f"flagged={len(record.flagged)})")
    return EXIT_OK


def _replicas_from_dir(path: Path):
    files = sorted(p for p in path.iterdir() if p.suffix == ".stf")
    specs = [read_spectrogram(p) for p in files]
    pairs = []
    key = lambda s: (s.meta.qubit, s.meta.cycle, s.meta.clock_hours)  # noqa: E731
    for _, group in groupby(sorted(specs, key=key), key=key):
        group = list(group)
        pairs += [(group[i], group[i + 1]) for i in range(0, len(group) - 1, 2)]
    return pairs


def _alpha_from_pairs(pairs) -> float:
    if len(pairs) < 10:
        raise InsufficientReplicas(f"need >= 10 replica pairs, got {len(pairs)}")
    return alpha_from_divergences(spectral_divergence(zscore_normalize(a), zscore_normalize(b))
                                  for a, b in pairs)


def cmd_stf(args) -> int:
    a = read_spectrogram(args.map_a)
    b = read_spectrogram(args.map_b)
    if a.grid.shape != b.grid.shape:
        raise DimensionMismatch(f"map shapes differ: {a.grid.shape} vs {b.grid.shape}")
    if args.calibration is not None:
        alpha = _alpha_from_pairs(_replicas_from_dir(Path(args.calibration)))
    elif args.alpha is not None:
        alpha = args.alpha
    else:
        raise UsageError("stf needs --alpha or --calibration DIR")
    report = stf(zscore_normalize(a), zscore_normalize(b), AnalysisConfig(alpha))
    print(f"delta={fmt_float(report.delta)} rho={fmt_float(report.rho)} "
          f"pearson={fmt_float(report.pearson)} n={report.n} alpha={fmt_float(alpha)}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.replicas is not None:
        pairs = _replicas_from_dir(Path(args.replicas))
        alpha = _alpha_from_pairs(pairs)
        n = len(pairs)
    elif args.config is not None:
        cfg = load_config(args.config, seed=args.seed)
        pairs = replica_pairs(cfg.plan, args.pairs)
        if args.out is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            for i, (x, y) in enumerate(pairs):
                write_spectrogram(out / f"replica{i:03d}_a.stf", x)
                write_spectrogram(out / f"replica{i:03d}_b.stf", y)
        alpha = _alpha_from_pairs(pairs)
        n = len(pairs)
    else:
        raise UsageError("calibrate needs --config or --replicas DIR")
    print(f"alpha={fmt_float(alpha)} pairs={n}")
    return EXIT_OK


def cmd_fit_arch(args) -> int:
    fit = fit_arch(read_arch_scan(args.path))
    err = fit.stderr
    print(f"f01_max_ghz={fit.f01_max:.9f} +/- {err[0]:.3g}")
    print(f"bias_at_max_ma={fit.bias_at_max:.9f} +/- {err[1]:.3g}")
    print(f"ec_ghz={fit.ec:.9f} +/- {err[2]:.3g}")
    print(f"ej_ghz={fit.ej:.9f}")
    print(f"residual_rms_mhz={fit.residual_rms:.6g} nfev={fit.nfev}")
    return EXIT_OK


def cmd_fit_t1(args) -> int:
    delays, p = read_t1_trace(args.path)
    fit = fit_t1(delays, p)
    print(f"t1_us={fit.t1:.6f} +/- {fit.t1_err:.3g}")
    print(f"contrast={fit.contrast:.6f} +/- {fit.contrast_err:.3g}")
    print(f"floor={fit.floor:.6f} +/- {fit.floor_err:.3g}")
    print(f"residual_rms={fit.residual_rms:.6g} nfev={fit.nfev}")
    return EXIT_OK


def _load_run(run: Path) -> dict:
    path = run / MANIFEST
    if not path.is_file():
        raise FileFormatError(f"{run}: no {MANIFEST}; not a run directory")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        files = manifest["files"]
    except (json.JSONDecodeError, KeyError, TypeError) as err:
        raise FileFormatError(f"{path}: corrupt manifest ({err})") from None
    for name in TABLES.values():
        if name not in files:
            raise FileFormatError(f"{path}: manifest does not list {name}")
    for name, digest in files.items():
        if not (run / name).is_file():
            raise FileFormatError(f"{run / name}: listed in manifest but missing")
        if sha256_file(run / name) != digest:
            raise FileFormatError(f"{run / name}: checksum does not match manifest")
    return manifest


def _column(header, rows, name):
    i = header.index(name)
    return [r[i] for r in rows]


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    _load_run(run)
    out = Path(args.out) if args.out else run / "plot"
    out.mkdir(parents=True, exist_ok=True)

    header, rows = read_table(run / TABLES["stf"])
    kinds = _column(header, rows, "kind")
    dts = np.array(_column(header, rows, "dt_hours"), dtype=float)
    rhos = np.array(_column(header, rows, "rho"), dtype=float)
    qubits = _column(header, rows, "qubit")
    plot_rows = []
    for q, k, dt, r in zip(qubits, kinds, dts, rhos):
        plot_rows.append((k, q, float(np.log10(dt)) if dt > 0 else float("nan"), float(r)))
    inter = rhos[np.array(kinds) == "inter"]
    baseline = float(np.mean(inter)) if inter.size else float("nan")
    try:
        reports = tuple(StfReport(0.0, float(r), 0.0, 0, float(dt), kind=k) for k, dt, r in zip(kinds, dts, rhos))
        summary = summarize_decay(StfMatrix(reports))
        plot_rows += [("intra_median", "", x, y) for x, y in zip(summary.log10_dt, summary.median_rho)]
    except StabilityLabError as err:
        log.warning("no binned decay curve: %s", err)
    plot_rows.append(("baseline", "", float("nan"), baseline))
    write_table(out / "stf_plot.csv", ("series", "qubit", "log10_dt_hours", "rho"), plot_rows)

    header, rows = read_table(run / TABLES["deviations"])
    write_table(out / "deviations_plot.csv", header, rows)

    header, rows = read_table(run / TABLES["t1_stats"])
    qs, cs = _column(header, rows, "qubit"), _column(header, rows, "cycle")
    means = np.array(_column(header, rows, "mean_us"), dtype=float)
    maxes = np.array(_column(header, rows, "max_us"), dtype=float)
    t1_rows = []
    seen = []
    for key in zip(qs, cs):
        if key not in seen:
            seen.append(key)
    for q, c in seen:
        sel = [i for i, key in enumerate(zip(qs, cs)) if key == (q, c)]
        m, x = means[sel], maxes[sel]
        t1_rows.append((q, c, "bar", float(np.nanmean(m)) if np.isfinite(m).any() else float("nan")))
        t1_rows.append((q, c, "star", float(np.nanmax(x)) if np.isfinite(x).any() else float("nan")))
    write_table(out / "t1_plot.csv", ("qubit", "cycle", "marker", "t1_us"), t1_rows)
    print(f"baseline_rho={fmt_float(baseline)} tables in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stabilitylab", description="T1 spectral topography stability toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a longitudinal experiment from a YAML config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="override plan.root_seed")
    s.add_argument("--out", required=True)
    s.add_argument("--alpha", type=float, help="fixed noise floor instead of calibrating")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("stf", help="fidelity between two spectrogram files")
    s.add_argument("map_a")
    s.add_argument("map_b")
    s.add_argument("--alpha", type=float)
    s.add_argument("--calibration", metavar="DIR", help="directory of replica spectrogram pairs")
    s.set_defaults(func=cmd_stf)

    s = sub.add_parser("calibrate", help="noise floor alpha from replica pairs")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--pairs", type=int, default=50)
    s.add_argument("--replicas", metavar="DIR", help="read replica pairs instead of simulating")
    s.add_argument("--out", help="also write the simulated replicas here")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("fit", help="fit an arch scan or a T1 trace")
    fit_sub = s.add_subparsers(dest="fit_kind", required=True)
    f = fit_sub.add_parser("arch")
    f.add_argument("path")
    f.set_defaults(func=cmd_fit_arch)
    f = fit_sub.add_parser("t1")
    f.add_argument("path")
    f.set_defaults(func=cmd_fit_t1)

    s = sub.add_parser("report", help="plot-ready tables from a run directory")
    s.add_argument("run_dir")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except _INPUT as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except _NUMERIC as err:
        nfev = getattr(err, "nfev", None)
        extra = f" (function evaluations: {nfev})" if nfev is not None else ""
        print(f"error: {type(err).__name__}: {err}{extra}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StabilityLabError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
