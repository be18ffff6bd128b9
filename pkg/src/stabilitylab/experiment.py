"""Longitudinal protocol: qubits x thermal cycles x timed measurement sessions.

The runner is sequential and every random draw is keyed by
``(root_seed, qubit, cycle, session, purpose)``, so a record is a pure
function of its plan.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats as sps

from .analysis import (AnalysisConfig, NormalizedMap, SessionStats, StfReport, calibrate_alpha,
                       session_stats, stf, zscore_normalize)
from .errors import InsufficientSpan, InvalidParameter, StabilityLabError
from .fitting import ArchFit, fit_arch, fit_t1_batch
from .measurement import (GridConfig, ReadoutModel, Spectrogram, SpectrogramMeta, simulate_arch_scan,
                          simulate_spectrogram, simulate_t1_trace)
from .model import (BathPrior, CyclePerturbation, DeviceState, FluxLine, TransmonParams, advance_bath,
                    apply_thermal_cycle, f01_max, initial_device, reduce_flux)
from .seeding import derive_seed, rng_from

log = logging.getLogger(__name__)

DEFAULT_SESSION_HOURS = (1.0, 2.0, 10.0, 100.0, 500.0, 1500.0)


@dataclass(frozen=True)
class QubitConfig:
    name: str
    ej: float  # GHz
    ec: float  # GHz
    gamma0: float  # 1/us
    mutual: float = 0.1  # Phi0 per mA
    bias_offset: float = 0.0  # mA, zero-flux bias without trapped flux

    def params(self) -> TransmonParams:
        return TransmonParams(self.ej, self.ec, self.gamma0)


def default_qubits(n: int = 27, seed: int = 2024) -> list[QubitConfig]:
    """A reproducible batch of ~4.5 GHz transmons named Q1..Qn."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        out.append(QubitConfig(
            name=f"Q{i + 1}",
            ej=float(rng.uniform(12.5, 15.5)),
            ec=float(rng.uniform(0.19, 0.23)),
            gamma0=float(1.0 / rng.uniform(55.0, 85.0)),
            mutual=float(rng.uniform(0.08, 0.12)),
            bias_offset=float(rng.uniform(-1.0, 1.0)),
        ))
    return out


@dataclass(frozen=True)
class ArchScanConfig:
    n_points: int = 41
    half_span_phi0: float = 0.3
    sigma_f_mhz: float = 1.0

    def bias_points(self, q: QubitConfig) -> np.ndarray:
        half = self.half_span_phi0 / abs(q.mutual)
        return np.linspace(q.bias_offset - half, q.bias_offset + half, self.n_points)


@dataclass(frozen=True)
class T1SessionConfig:
    """T1 traces per session, each at a random frequency inside the grid window."""

    n_traces: int = 48
    shots: int = 2000
    n_delays: int = 41
    min_delay_us: float = 0.5
    max_delay_us: float = 300.0

    @property
    def delays(self) -> np.ndarray:
        return np.geomspace(self.min_delay_us, self.max_delay_us, self.n_delays)


@dataclass(frozen=True)
class OutlierSpec:
    qubit: str
    cycle: int
    shift_mhz: float


def default_readout() -> ReadoutModel:
    return ReadoutModel(shots=100, contrast=0.9, floor=0.05, contrast_jitter=0.03, floor_jitter=0.01)


@dataclass(frozen=True)
class ExperimentPlan:
    qubits: tuple[QubitConfig, ...] = field(default_factory=lambda: tuple(default_qubits()))
    n_cycles: int = 4
    session_hours: tuple[float, ...] = DEFAULT_SESSION_HOURS
    perturbation: CyclePerturbation = field(default_factory=CyclePerturbation)
    bath_prior: BathPrior = field(default_factory=BathPrior)
    grid: GridConfig = field(default_factory=GridConfig)
    readout: ReadoutModel = field(default_factory=default_readout)
    arch_scan: ArchScanConfig = field(default_factory=ArchScanConfig)
    t1_session: T1SessionConfig = field(default_factory=T1SessionConfig)
    root_seed: int = 0
    outliers: tuple[OutlierSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "session_hours", tuple(float(t) for t in self.session_hours))
        object.__setattr__(self, "outliers", tuple(self.outliers))
        if self.n_cycles < 1:
            raise InvalidParameter("n_cycles must be >= 1")
        if not self.qubits:
            raise InvalidParameter("plan needs at least one qubit")
        if not self.session_hours:
            raise InvalidParameter("plan needs at least one session")
        if self.session_hours[0] < 0 or np.any(np.diff(self.session_hours) <= 0):
            raise InvalidParameter("session times must be non-negative and strictly increasing")
        names = [q.name for q in self.qubits]
        if len(set(names)) != len(names):
            raise InvalidParameter("qubit names must be unique")


@dataclass(frozen=True, eq=False)
class SessionRecord:
    qubit: str
    cycle: int
    session: int
    clock_hours: float
    cold_hours: float
    gamma0: float
    true_f01_max: float
    true_sweet_spot_bias: float
    arch: ArchFit | None
    t1_samples: tuple[float, ...]
    t1_stats: SessionStats | None
    spectrogram: Spectrogram | None
    flags: tuple[str, ...] = ()

    @property
    def missing(self) -> bool:
        return bool(self.flags)


@dataclass(frozen=True)
class DeviationRow:
    qubit: str
    cycle: int
    df01max_mhz: float
    abs_dibmax_phi0: float


@dataclass(frozen=True, eq=False)
class ExperimentRecord:
    plan: ExperimentPlan
    sessions: tuple[SessionRecord, ...]
    deviations: tuple[DeviationRow, ...]

    def for_qubit(self, name: str) -> list[SessionRecord]:
        return [s for s in self.sessions if s.qubit == name]

    @property
    def flagged(self) -> list[SessionRecord]:
        return [s for s in self.sessions if s.flags]


def _flag(kind: str, err: Exception) -> str:
    return f"{kind}:{type(err).__name__}:{err}"


def _measure_session(plan: ExperimentPlan, qi: int, q: QubitConfig, device: DeviceState, grid,
                     cycle: int, s: int, cold: float) -> SessionRecord:
    root = plan.root_seed
    flags = []

    arch = None
    try:
        scan = simulate_arch_scan(device, plan.arch_scan.bias_points(q), plan.arch_scan.sigma_f_mhz,
                                  derive_seed(root, qi, cycle, s, "arch"))
        arch = fit_arch(scan)
    except StabilityLabError as err:
        flags.append(_flag("arch", err))

    readout = plan.readout.session_draw(derive_seed(root, qi, cycle, s, "readout"))
    t1_readout = ReadoutModel(plan.t1_session.shots, readout.contrast, readout.floor)
    t1_freqs = rng_from(derive_seed(root, qi, cycle, s, "t1_freqs")).uniform(
        grid.freq_points[0], grid.freq_points[-1], plan.t1_session.n_traces)
    delays = plan.t1_session.delays
    traces = [simulate_t1_trace(device, f, delays, t1_readout, derive_seed(root, qi, cycle, s, k, "t1"))
              for k, f in enumerate(t1_freqs)]
    samples = []
    if traces:
        for k, t1 in enumerate(fit_t1_batch(delays, np.array(traces))):
            if np.isfinite(t1):
                samples.append(float(t1))
            else:
                flags.append(f"t1[{k}]:ConvergenceFailure:no converged positive T1")
    t1_stats = session_stats(samples) if samples else None

    spectrogram = None
    meta = SpectrogramMeta(q.name, cycle, device.clock, s, cold)
    try:
        spectrogram = simulate_spectrogram(device, grid, readout, derive_seed(root, qi, cycle, s, "spectrogram"), meta)
    except StabilityLabError as err:
        flags.append(_flag("spectrogram", err))

    for f in flags:
        log.warning("%s cycle %d session %d flagged: %s", q.name, cycle, s, f)
    return SessionRecord(q.name, cycle, s, device.clock, cold, device.params.gamma0, f01_max(device.params),
                         device.flux_line.sweet_spot_bias, arch, tuple(samples), t1_stats, spectrogram,
                         tuple(flags))


def _deviations(plan: ExperimentPlan, sessions: list[SessionRecord]) -> list[DeviationRow]:
    rows = []
    for q in plan.qubits:
        per_cycle = {}
        for c in range(1, plan.n_cycles + 1):
            fits = [s.arch for s in sessions if s.qubit == q.name and s.cycle == c and s.arch is not None]
            if fits:
                per_cycle[c] = (float(np.median([a.f01_max for a in fits])),
                                float(np.median([a.bias_at_max for a in fits])))
        base = per_cycle.get(1)
        for c in range(1, plan.n_cycles + 1):
            cur = per_cycle.get(c)
            if base is None or cur is None:
                rows.append(DeviationRow(q.name, c, float("nan"), float("nan")))
            elif c == 1:
                rows.append(DeviationRow(q.name, 1, 0.0, 0.0))
            else:
                dflux = float(reduce_flux((cur[1] - base[1]) * q.mutual))
                rows.append(DeviationRow(q.name, c, (cur[0] - base[0]) * 1e3, abs(dflux)))
    return rows


def initial_flux_line(plan: ExperimentPlan, qi: int, q: QubitConfig) -> FluxLine:
    d = plan.perturbation.flux_offset_dist
    offset = float(rng_from(derive_seed(plan.root_seed, qi, 0, 0, "layout")).uniform(-d, d)) if d > 0 else 0.0
    return FluxLine(q.mutual, q.bias_offset, offset)


def run_longitudinal(plan: ExperimentPlan) -> ExperimentRecord:
    root = plan.root_seed
    outliers = {(o.qubit, o.cycle): o.shift_mhz for o in plan.outliers}
    sessions: list[SessionRecord] = []
    for qi, q in enumerate(plan.qubits):
        device = initial_device(q.params(), initial_flux_line(plan, qi, q), plan.bath_prior,
                                derive_seed(root, qi, 0, 0, "init"))
        grid = plan.grid.build(f01_max(device.params))
        cold_before = 0.0
        cycle_start = 0.0
        for cycle in range(1, plan.n_cycles + 1):
            if cycle > 1:
                cold_before += device.clock - cycle_start
                device = apply_thermal_cycle(device, plan.perturbation, derive_seed(root, qi, cycle, 0, "cycle"),
                                             extra_shift_mhz=outliers.get((q.name, cycle), 0.0))
            cycle_start = device.clock
            for s, t in enumerate(plan.session_hours):
                device = advance_bath(device, cycle_start + t - device.clock,
                                      derive_seed(root, qi, cycle, s, "diffusion"))
                sessions.append(_measure_session(plan, qi, q, device, grid, cycle, s, cold_before + t))
        log.info("%s: %d cycles simulated", q.name, plan.n_cycles)
    return ExperimentRecord(plan, tuple(sessions), tuple(_deviations(plan, sessions)))


def replica_pairs(plan: ExperimentPlan, n_pairs: int = 50, key: str = "calibration"):
    """Noise-only spectrogram pairs: same device and bath, independent readout draws and shots."""
    pairs = []
    nq = len(plan.qubits)
    for i in range(n_pairs):
        qi = i % nq
        q = plan.qubits[qi]
        device = initial_device(q.params(), initial_flux_line(plan, qi, q), plan.bath_prior,
                                derive_seed(plan.root_seed, key, i, "init"))
        grid = plan.grid.build(f01_max(device.params))
        pair = []
        for r in range(2):
            ro = plan.readout.session_draw(derive_seed(plan.root_seed, key, i, r, "readout"))
            meta = SpectrogramMeta(q.name, 1, 0.0, r, 0.0)
            pair.append(simulate_spectrogram(device, grid, ro, derive_seed(plan.root_seed, key, i, r, "spectrogram"), meta))
        pairs.append(tuple(pair))
    return pairs


def calibrate_plan_alpha(plan: ExperimentPlan, n_pairs: int = 50, key: str = "calibration") -> float:
    return calibrate_alpha(replica_pairs(plan, n_pairs, key))


def fresh_bath_stf(plan: ExperimentPlan, cfg: AnalysisConfig, n: int = 100, key: str = "fresh") -> list[StfReport]:
    """STF between spectrograms of two independently drawn baths on the same qubit."""
    out = []
    nq = len(plan.qubits)
    for i in range(n):
        qi = i % nq
        q = plan.qubits[qi]
        maps = []
        for r in range(2):
            device = initial_device(q.params(), initial_flux_line(plan, qi, q), plan.bath_prior,
                                    derive_seed(plan.root_seed, key, i, r, "init"))
            grid = plan.grid.build(f01_max(q.params()))
            ro = plan.readout.session_draw(derive_seed(plan.root_seed, key, i, r, "readout"))
            meta = SpectrogramMeta(q.name, r + 1, 0.0, 0, None)
            maps.append(zscore_normalize(simulate_spectrogram(
                device, grid, ro, derive_seed(plan.root_seed, key, i, r, "spectrogram"), meta)))
        out.append(stf(maps[0], maps[1], cfg))
    return out


@dataclass(frozen=True)
class StfMatrix:
    reports: tuple[StfReport, ...]

    def intra(self) -> list[StfReport]:
        return [r for r in self.reports if r.kind == "intra"]

    def inter(self) -> list[StfReport]:
        return [r for r in self.reports if r.kind == "inter"]

    def __len__(self):
        return len(self.reports)


def stf_matrix(record: ExperimentRecord, cfg: AnalysisConfig, inter: str = "adjacent") -> StfMatrix:
    """Score every same-qubit session pair; ``inter`` is "adjacent", "all" or "none"."""
    if inter not in ("adjacent", "all", "none"):
        raise InvalidParameter(f"inter must be 'adjacent', 'all' or 'none', got {inter!r}")
    reports = []
    for q in record.plan.qubits:
        maps: list[NormalizedMap] = [zscore_normalize(s.spectrogram) for s in record.for_qubit(q.name)
                                     if s.spectrogram is not None]
        for a, b in combinations(maps, 2):
            gap = abs(b.meta.cycle - a.meta.cycle)
            if gap == 0 or inter == "all" or (inter == "adjacent" and gap == 1):
                reports.append(stf(a, b, cfg))
    return StfMatrix(tuple(reports))


@dataclass(frozen=True)
class DecaySummary:
    log10_dt: tuple[float, ...]  # per bin: median log10(dt)
    median_rho: tuple[float, ...]
    counts: tuple[int, ...]
    slope: float  # d(median rho) / d(log10 dt)
    intercept: float
    spearman: float
    baseline_median: float
    baseline_mean: float


def summarize_decay(matrix: StfMatrix, bin_width: float = 0.5) -> DecaySummary:
    """Bin intra-cycle rho by log10(dt) and fit a line through the bin medians."""
    intra = [r for r in matrix.intra() if np.isfinite(r.dt_hours) and r.dt_hours > 0]
    if len(intra) < 5:
        raise InsufficientSpan(f"need >= 5 intra-cycle pairs with dt > 0, got {len(intra)}")
    logdt = np.log10([r.dt_hours for r in intra])
    rho = np.array([r.rho for r in intra])
    if np.ptp(logdt) < 2.0:
        raise InsufficientSpan(f"intra-cycle pairs span {np.ptp(logdt):.2f} decades, need >= 2")
    bins = np.floor(logdt / bin_width).astype(int)
    xs, ys, ns = [], [], []
    for b in np.unique(bins):
        sel = bins == b
        xs.append(float(np.median(logdt[sel])))
        ys.append(float(np.median(rho[sel])))
        ns.append(int(sel.sum()))
    slope, intercept = np.polyfit(xs, ys, 1) if len(xs) >= 2 else (float("nan"), float("nan"))
    spearman = float(sps.spearmanr(xs, ys)[0]) if len(xs) >= 3 else float("nan")
    inter = [r.rho for r in matrix.inter()]
    base_med = float(np.median(inter)) if inter else float("nan")
    base_mean = float(np.mean(inter)) if inter else float("nan")
    return DecaySummary(tuple(xs), tuple(ys), tuple(ns), float(slope), float(intercept), spearman,
                        base_med, base_mean)
