"""Text file formats, report tables and the YAML run configuration.

Every writer goes through :func:`atomic_write_text`, so a reader never sees a
half-written file.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
import yaml

from .analysis import StfReport
from .errors import ConfigError, FileFormatError, StabilityLabError
from .experiment import (ArchScanConfig, DeviationRow, ExperimentPlan, ExperimentRecord, OutlierSpec,
                         QubitConfig, T1SessionConfig, default_qubits)
from .measurement import ArchScan, GridConfig, ReadoutModel, Spectrogram, SpectrogramMeta, SpectroscopyGrid
from .model import BathPrior, CyclePerturbation

SPECTROGRAM_HEADER = "# stf-spectrogram v1"
ARCH_HEADER = "# stf-arch v1"
T1_HEADER = "# stf-t1 v1"
VALUE_DIGITS = 10

DEVIATION_COLUMNS = ("qubit", "cycle", "delta_f01max_mhz", "abs_delta_ibmax_phi0")
T1_STATS_COLUMNS = ("qubit", "cycle", "session", "mean_us", "max_us")
STF_COLUMNS = ("qubit", "cycle_a", "session_a", "cycle_b", "session_b", "dt_hours", "delta", "rho",
               "pearson", "kind")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fmt_float(x) -> str:
    """Shortest round-tripping decimal; independent of the process locale."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def _parse_float(s: str, where: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise FileFormatError(f"{where}: not a number: {s!r}") from None


def _split_header(lines: list[str], magic: str, name: str) -> tuple[dict[str, str], list[str]]:
    if not lines or lines[0].strip() != magic:
        raise FileFormatError(f"{name}: missing '{magic}' header")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].partition(":")
        if not sep:
            raise FileFormatError(f"{name}: line {i + 1}: metadata must read '# key: value'")
        meta[key.strip()] = value.strip()
        i += 1
    body = [ln for ln in lines[i:] if ln.strip()]
    return meta, body


def _row(line: str, where: str) -> np.ndarray:
    return np.array([_parse_float(tok, where) for tok in line.split(",")])


# spectrograms

def format_spectrogram(spec: Spectrogram) -> str:
    m = spec.meta
    n_tau, n_omega = spec.grid.shape
    lines = [
        SPECTROGRAM_HEADER,
        f"# qubit: {m.qubit}",
        f"# cycle: {m.cycle}",
        f"# clock_hours: {fmt_float(m.clock_hours)}",
        f"# session: {m.session}",
        f"# cold_hours: {'none' if m.cold_hours is None else fmt_float(m.cold_hours)}",
        f"# n_tau: {n_tau}",
        f"# n_omega: {n_omega}",
        ",".join(fmt_float(f) for f in spec.grid.freq_points),
        ",".join(fmt_float(d) for d in spec.grid.delay_points),
    ]
    for row in spec.values:
        lines.append(",".join(f"{v:.{VALUE_DIGITS}g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_spectrogram(text: str, name: str = "<spectrogram>") -> Spectrogram:
    meta, body = _split_header(text.splitlines(), SPECTROGRAM_HEADER, name)
    for key in ("qubit", "cycle", "clock_hours"):
        if key not in meta:
            raise FileFormatError(f"{name}: missing metadata '{key}'")
    if len(body) < 2:
        raise FileFormatError(f"{name}: missing frequency/delay axis lines")
    freqs = _row(body[0], f"{name}: frequency line")
    delays = _row(body[1], f"{name}: delay line")
    rows = body[2:]
    try:
        n_tau = int(meta.get("n_tau", len(delays)))
        n_omega = int(meta.get("n_omega", len(freqs)))
        cycle = int(meta["cycle"])
        session = int(meta.get("session", 0))
    except ValueError as err:
        raise FileFormatError(f"{name}: bad integer metadata: {err}") from None
    if n_omega != len(freqs) or n_tau != len(delays):
        raise FileFormatError(f"{name}: declared {n_tau}x{n_omega} but axes have "
                              f"{len(delays)} delays and {len(freqs)} frequencies")
    if len(rows) != n_tau:
        raise FileFormatError(f"{name}: expected {n_tau} value rows, found {len(rows)}")
    values = np.empty((n_tau, n_omega))
    for i, line in enumerate(rows):
        r = _row(line, f"{name}: row {i + 1}")
        if len(r) != n_omega:
            raise FileFormatError(f"{name}: row {i + 1} has {len(r)} values, expected {n_omega}")
        values[i] = r
    cold = meta.get("cold_hours", "none")
    m = SpectrogramMeta(
        qubit=meta["qubit"],
        cycle=cycle,
        clock_hours=_parse_float(meta["clock_hours"], f"{name}: clock_hours"),
        session=session,
        cold_hours=None if cold == "none" else _parse_float(cold, f"{name}: cold_hours"),
    )
    try:
        return Spectrogram(SpectroscopyGrid(freqs, delays), values, m)
    except StabilityLabError as err:
        raise FileFormatError(f"{name}: {err}") from None


def write_spectrogram(path, spec: Spectrogram) -> None:
    atomic_write_text(path, format_spectrogram(spec))


def read_spectrogram(path) -> Spectrogram:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise FileFormatError(f"{path}: {err.strerror}") from None
    return parse_spectrogram(text, str(path))


def spectrogram_filename(meta: SpectrogramMeta) -> str:
    return f"{meta.qubit}_c{meta.cycle}_s{meta.session}.stf"


# arch scans and T1 traces

def format_arch_scan(scan: ArchScan) -> str:
    lines = [ARCH_HEADER, f"# mutual_phi0_per_ma: {fmt_float(scan.mutual)}",
             f"# sigma_f_mhz: {fmt_float(scan.sigma_f)}", "bias_ma,f01_ghz"]
    lines += [f"{fmt_float(b)},{fmt_float(f)}" for b, f in zip(scan.bias_points, scan.freqs)]
    return "\n".join(lines) + "\n"


def _two_columns(body: list[str], header: str, name: str) -> tuple[np.ndarray, np.ndarray]:
    if not body or body[0].strip() != header:
        raise FileFormatError(f"{name}: expected column header '{header}'")
    cols = []
    for i, line in enumerate(body[1:]):
        r = _row(line, f"{name}: data row {i + 1}")
        if len(r) != 2:
            raise FileFormatError(f"{name}: data row {i + 1} must have 2 columns")
        cols.append(r)
    arr = np.array(cols).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def read_arch_scan(path) -> ArchScan:
    path = Path(path)
    meta, body = _split_header(_read_lines(path), ARCH_HEADER, str(path))
    if "mutual_phi0_per_ma" not in meta:
        raise FileFormatError(f"{path}: missing metadata 'mutual_phi0_per_ma'")
    bias, freqs = _two_columns(body, "bias_ma,f01_ghz", str(path))
    mutual = _parse_float(meta["mutual_phi0_per_ma"], f"{path}: mutual_phi0_per_ma")
    sigma = _parse_float(meta.get("sigma_f_mhz", "0"), f"{path}: sigma_f_mhz")
    try:
        return ArchScan(bias, freqs, sigma, mutual)
    except StabilityLabError as err:
        raise FileFormatError(f"{path}: {err}") from None


def write_arch_scan(path, scan: ArchScan) -> None:
    atomic_write_text(path, format_arch_scan(scan))


def format_t1_trace(delays, probabilities) -> str:
    lines = [T1_HEADER, "delay_us,p_excited"]
    lines += [f"{fmt_float(d)},{fmt_float(p)}" for d, p in zip(delays, probabilities)]
    return "\n".join(lines) + "\n"


def read_t1_trace(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    _, body = _split_header(_read_lines(path), T1_HEADER, str(path))
    return _two_columns(body, "delay_us,p_excited", str(path))


def write_t1_trace(path, delays, probabilities) -> None:
    atomic_write_text(path, format_t1_trace(delays, probabilities))


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise FileFormatError(f"{path}: {err.strerror}") from None


# report tables

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def format_table(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, table has {len(columns)} columns")
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    atomic_write_text(path, format_table(columns, rows))


def read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise FileFormatError(f"{path}: {err.strerror}") from None
    if not rows:
        raise FileFormatError(f"{path}: empty table (no header row)")
    return rows[0], rows[1:]


def deviation_rows(deviations: Iterable[DeviationRow]) -> list[tuple]:
    return [(d.qubit, d.cycle, d.df01max_mhz, d.abs_dibmax_phi0) for d in deviations]


def t1_stats_rows(record: ExperimentRecord) -> list[tuple]:
    nan = float("nan")
    return [(s.qubit, s.cycle, s.session,
             s.t1_stats.mean_t1 if s.t1_stats else nan, s.t1_stats.max_t1 if s.t1_stats else nan)
            for s in record.sessions]


def stf_rows(reports: Iterable[StfReport]) -> list[tuple]:
    return [(r.qubit, r.cycle_a, r.session_a, r.cycle_b, r.session_b, r.dt_hours, r.delta, r.rho,
             r.pearson, r.kind) for r in reports]


# configuration

@dataclass(frozen=True)
class AnalysisSettings:
    """STF settings from the config; ``alpha=None`` means calibrate from replicas."""

    alpha: float | None = None
    delta_floor: float | None = None
    calibration_pairs: int = 50
    inter: str = "adjacent"


@dataclass(frozen=True)
class RunConfig:
    plan: ExperimentPlan
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)


class _Doc:
    """Typed access to a composed YAML mapping with line-accurate errors."""

    def __init__(self, loader: yaml.SafeLoader, node, path: str, key_node=None):
        self._loader = loader
        self.node = node
        self.key_node = key_node
        self.path = path
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError("expected a mapping", path or "<root>", _line(node))
        self.items = {}
        for k, v in node.value:
            key = self._loader.construct_object(k)
            if not isinstance(key, str):
                raise ConfigError(f"keys must be strings, got {key!r}", path, _line(k))
            if key in self.items:
                raise ConfigError("duplicate key", self._sub(key), _line(k))
            self.items[key] = (k, v)
        self.used: set[str] = set()

    def _sub(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    @property
    def line(self):
        return _line(self.key_node if self.key_node is not None else self.node)

    def line_of(self, key: str):
        return _line(self.items[key][0]) if key in self.items else self.line

    def has(self, key: str) -> bool:
        return key in self.items

    def require(self, key: str):
        if key not in self.items:
            raise ConfigError(f"missing required key '{key}'", self._sub(key), self.line)

    def section(self, key: str, required: bool = False) -> _Doc | None:
        if required:
            self.require(key)
        if key not in self.items:
            return None
        self.used.add(key)
        key_node, node = self.items[key]
        return _Doc(self._loader, node, self._sub(key), key_node)

    def raw(self, key: str):
        self.used.add(key)
        return self.items[key][1]

    def get(self, key: str, kind: Callable, default=None, required: bool = False):
        if required:
            self.require(key)
        if key not in self.items:
            return default
        node = self.raw(key)
        return _coerce(self._loader, node, kind, self._sub(key))

    def finish(self):
        unknown = [k for k in self.items if k not in self.used]
        if unknown:
            k = unknown[0]
            raise ConfigError(f"unknown key '{k}'", self._sub(k), _line(self.items[k][0]))


def _line(node):
    return node.start_mark.line + 1 if node is not None and node.start_mark else None


def _coerce(loader, node, kind, path):
    if not isinstance(node, yaml.ScalarNode) and kind not in (_pair, _float_list, _list_of_docs):
        raise ConfigError("expected a scalar value", path, _line(node))
    if kind is _list_of_docs:
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError("expected a list", path, _line(node))
        return [_Doc(loader, item, f"{path}[{i}]") for i, item in enumerate(node.value)]
    value = loader.construct_object(node, deep=True)
    try:
        return kind(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err), path, _line(node)) from None


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"expected a number, got {v!r}")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"expected an integer, got {v!r}")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError(f"expected true/false, got {v!r}")
    return v


def _str(v):
    if not isinstance(v, (str, int)) or isinstance(v, bool):
        raise TypeError(f"expected a string, got {v!r}")
    return str(v)


def _pair(v):
    if not isinstance(v, list) or len(v) != 2:
        raise TypeError(f"expected a two-element list [low, high], got {v!r}")
    return _float(v[0]), _float(v[1])


def _float_list(v):
    if not isinstance(v, list):
        raise TypeError(f"expected a list of numbers, got {v!r}")
    return tuple(_float(x) for x in v)


def _list_of_docs(v):  # marker, handled in _coerce
    return v


def _build(section: _Doc, factory, **kwargs):
    section.finish()
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    try:
        return factory(**kwargs)
    except StabilityLabError as err:
        raise ConfigError(str(err), section.path, section.line) from None


def _qubits(plan: _Doc) -> tuple[QubitConfig, ...]:
    if plan.has("qubits"):
        if plan.has("n_qubits"):
            raise ConfigError("give either 'qubits' or 'n_qubits', not both", plan._sub("n_qubits"),
                              _line(plan.items["n_qubits"][0]))
        out = []
        for doc in plan.get("qubits", _list_of_docs):
            name = doc.get("name", _str, required=True)
            t1 = doc.get("t1_baseline_us", _float, required=True)
            if not t1 > 0:
                raise ConfigError("must be > 0", doc._sub("t1_baseline_us"), doc.line_of("t1_baseline_us"))
            out.append(_build(doc, QubitConfig, name=name, ej=doc.get("ej_ghz", _float, required=True),
                              ec=doc.get("ec_ghz", _float, required=True), gamma0=1.0 / t1,
                              mutual=doc.get("mutual_phi0_per_ma", _float),
                              bias_offset=doc.get("bias_offset_ma", _float)))
        if not out:
            raise ConfigError("qubit list is empty", plan._sub("qubits"), plan.line)
        return tuple(out)
    n = plan.get("n_qubits", _int, 27)
    seed = plan.get("qubit_seed", _int, 2024)
    if n < 1:
        raise ConfigError("must be >= 1", plan._sub("n_qubits"), plan.line_of("n_qubits"))
    return tuple(default_qubits(n, seed))


def _outliers(plan: _Doc) -> tuple[OutlierSpec, ...]:
    if not plan.has("outliers"):
        return ()
    out = []
    for doc in plan.get("outliers", _list_of_docs):
        out.append(_build(doc, OutlierSpec, qubit=doc.get("qubit", _str, required=True),
                          cycle=doc.get("cycle", _int, required=True),
                          shift_mhz=doc.get("shift_mhz", _float, required=True)))
    return tuple(out)


def parse_config(text: str, *, seed: int | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from YAML text; ``seed`` overrides ``plan.root_seed``.

    Sections ``plan``, ``grid`` and ``readout`` are required; ``bath``,
    ``perturbation``, ``arch_scan``, ``t1_session`` and ``analysis`` are
    optional. Any unknown key raises :class:`ConfigError`.
    """
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
        finally:
            loader.dispose()
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        problem = getattr(err, "problem", None) or str(err).splitlines()[0]
        raise ConfigError(f"YAML syntax error: {problem}", "", mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError("empty configuration document")
    root = _Doc(loader, node, "")

    plan = root.section("plan", required=True)
    grid = root.section("grid", required=True)
    readout = root.section("readout", required=True)

    qubits = _qubits(plan)
    outliers = _outliers(plan)
    n_cycles = plan.get("n_cycles", _int)
    session_hours = plan.get("session_hours", _float_list)
    root_seed = plan.get("root_seed", _int, 0)
    if seed is not None:
        root_seed = seed

    grid_cfg = _build(grid, GridConfig,
                      n_freq=grid.get("n_freq", _int), window_mhz=grid.get("window_mhz", _float),
                      gap_below_max_mhz=grid.get("gap_below_max_mhz", _float),
                      n_delay=grid.get("n_delay", _int), delay_min_us=grid.get("delay_min_us", _float),
                      delay_max_us=grid.get("delay_max_us", _float))
    readout_cfg = _build(readout, ReadoutModel,
                         shots=readout.get("shots", _int), contrast=readout.get("contrast", _float),
                         floor=readout.get("floor", _float),
                         contrast_jitter=readout.get("contrast_jitter", _float, 0.0),
                         floor_jitter=readout.get("floor_jitter", _float, 0.0))

    kw = {}
    bath = root.section("bath")
    if bath is not None:
        kw["bath_prior"] = _build(
            bath, BathPrior,
            density_per_mhz=bath.get("density_per_mhz", _float),
            window_below_mhz=bath.get("window_below_mhz", _float),
            window_above_mhz=bath.get("window_above_mhz", _float),
            gamma_max_range=bath.get("gamma_max_per_us", _pair),
            width_mhz_range=bath.get("width_mhz", _pair),
            fluctuators_per_defect=bath.get("fluctuators_per_defect", _int),
            coupling_mhz=bath.get("coupling_mhz", _float),
            rate_range_per_hour=bath.get("rate_per_hour", _pair),
            rate_exponent=bath.get("rate_exponent", _float))
    pert = root.section("perturbation")
    if pert is not None:
        kw["perturbation"] = _build(
            pert, CyclePerturbation,
            sigma_f01=pert.get("sigma_f01_mhz", _float),
            flux_offset_dist=pert.get("flux_offset_phi0", _float),
            reseed_tls=pert.get("reseed_tls", _bool),
            reset_clock=pert.get("reset_clock", _bool))
    arch = root.section("arch_scan")
    if arch is not None:
        kw["arch_scan"] = _build(arch, ArchScanConfig, n_points=arch.get("n_points", _int),
                                 half_span_phi0=arch.get("half_span_phi0", _float),
                                 sigma_f_mhz=arch.get("sigma_f_mhz", _float))
    t1s = root.section("t1_session")
    if t1s is not None:
        kw["t1_session"] = _build(t1s, T1SessionConfig, n_traces=t1s.get("n_traces", _int),
                                  shots=t1s.get("shots", _int), n_delays=t1s.get("n_delays", _int),
                                  min_delay_us=t1s.get("min_delay_us", _float),
                                  max_delay_us=t1s.get("max_delay_us", _float))
    settings = AnalysisSettings()
    ana = root.section("analysis")
    if ana is not None:
        inter = ana.get("inter", _str, "adjacent")
        if inter not in ("adjacent", "all", "none"):
            raise ConfigError("must be 'adjacent', 'all' or 'none'", ana._sub("inter"), ana.line_of("inter"))
        alpha = ana.get("alpha", _float)
        floor = ana.get("delta_floor", _float)
        pairs = ana.get("calibration_pairs", _int, 50)
        if alpha is not None and not alpha > 0:
            raise ConfigError("must be > 0", ana._sub("alpha"), ana.line_of("alpha"))
        if floor is not None and not floor > 0:
            raise ConfigError("must be > 0", ana._sub("delta_floor"), ana.line_of("delta_floor"))
        ana.finish()
        settings = AnalysisSettings(alpha, floor, pairs, inter)

    plan_cfg = _build(plan, ExperimentPlan, qubits=qubits, n_cycles=n_cycles, session_hours=session_hours,
                      grid=grid_cfg, readout=readout_cfg, root_seed=root_seed, outliers=outliers, **kw)
    root.finish()
    return RunConfig(plan_cfg, settings)


def load_config(path, *, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror}", str(path)) from None
    return parse_config(text, seed=seed)
