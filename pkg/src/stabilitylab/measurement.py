"""Synthetic measurement records: arch scans, T1 traces and decay spectrograms."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridUnreachable, InvalidParameter
from .model import DeviceState, f01_at_flux, f01_max, flux_from_bias, t1_at_frequency
from .seeding import rng_from

ANALYTIC = 0  # shots sentinel: return the noiseless probability


@dataclass(frozen=True, eq=False)
class SpectroscopyGrid:
    freq_points: np.ndarray  # GHz, length N_omega
    delay_points: np.ndarray  # us, length N_tau

    def __post_init__(self):
        f = np.asarray(self.freq_points, dtype=float)
        d = np.asarray(self.delay_points, dtype=float)
        if f.ndim != 1 or d.ndim != 1 or len(f) < 2 or len(d) < 2:
            raise InvalidParameter("grid axes must be 1-D with at least 2 points")
        if np.any(np.diff(f) <= 0) or np.any(np.diff(d) <= 0):
            raise InvalidParameter("grid axes must be strictly increasing")
        f.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "freq_points", f)
        object.__setattr__(self, "delay_points", d)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.delay_points), len(self.freq_points)

    def __eq__(self, other):
        if not isinstance(other, SpectroscopyGrid):
            return NotImplemented
        return (np.array_equal(self.freq_points, other.freq_points)
                and np.array_equal(self.delay_points, other.delay_points))


@dataclass(frozen=True)
class GridConfig:
    """Per-qubit grid recipe: a frequency window hanging below f01max."""

    n_freq: int = 101
    window_mhz: float = 300.0
    gap_below_max_mhz: float = 30.0
    n_delay: int = 51
    delay_min_us: float = 0.5
    delay_max_us: float = 150.0

    def build(self, f01max_ghz: float) -> SpectroscopyGrid:
        f_hi = f01max_ghz - self.gap_below_max_mhz * 1e-3
        freqs = np.linspace(f_hi - self.window_mhz * 1e-3, f_hi, self.n_freq)
        delays = np.geomspace(self.delay_min_us, self.delay_max_us, self.n_delay)
        return SpectroscopyGrid(freqs, delays)


@dataclass(frozen=True)
class ReadoutModel:
    """Binomial readout with visibility ``contrast`` and offset ``floor``.

    ``shots == 0`` selects analytic mode. The jitter fields set the spread of
    per-session draws made by :meth:`session_draw`.
    """

    shots: int = 150
    contrast: float = 0.9
    floor: float = 0.05
    contrast_jitter: float = 0.0
    floor_jitter: float = 0.0

    def __post_init__(self):
        if self.shots < 0:
            raise InvalidParameter("shots must be >= 1 (or 0 for analytic mode)")
        if not 0 < self.contrast <= 1:
            raise InvalidParameter("contrast must lie in (0, 1]")
        if not 0 <= self.floor <= 0.2:
            raise InvalidParameter("floor must lie in [0, 0.2]")
        if self.contrast + self.floor > 1 + 1e-12:
            raise InvalidParameter("contrast + floor must be <= 1")
        if self.contrast_jitter < 0 or self.floor_jitter < 0:
            raise InvalidParameter("jitter must be non-negative")

    @property
    def analytic(self) -> bool:
        return self.shots == ANALYTIC

    def session_draw(self, seed) -> ReadoutModel:
        """Readout settings for one session, jitter applied and clipped to valid values."""
        if self.contrast_jitter == 0 and self.floor_jitter == 0:
            return self
        rng = rng_from(seed)
        floor = float(np.clip(self.floor + rng.normal(0, self.floor_jitter), 0.0, 0.2))
        contrast = float(np.clip(self.contrast + rng.normal(0, self.contrast_jitter), 0.05, 1.0 - floor))
        return replace(self, contrast=contrast, floor=floor, contrast_jitter=0.0, floor_jitter=0.0)


@dataclass(frozen=True)
class SpectrogramMeta:
    qubit: str = ""
    cycle: int = 1
    clock_hours: float = 0.0
    session: int = 0
    # hours on a single cold-time axis spanning all cycles of a run
    cold_hours: float | None = None


@dataclass(frozen=True, eq=False)
class Spectrogram:
    grid: SpectroscopyGrid
    values: np.ndarray  # N_tau x N_omega
    meta: SpectrogramMeta = field(default_factory=SpectrogramMeta)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise InvalidParameter(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if np.any(v < 0) or np.any(v > 1):
            raise InvalidParameter("spectrogram values must lie in [0, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class ArchScan:
    bias_points: np.ndarray  # mA
    freqs: np.ndarray  # GHz
    sigma_f: float  # MHz
    mutual: float  # Phi0 per mA, assumed calibrated

    def __post_init__(self):
        b = np.asarray(self.bias_points, dtype=float)
        f = np.asarray(self.freqs, dtype=float)
        if b.shape != f.shape or b.ndim != 1:
            raise InvalidParameter("bias_points and freqs must be 1-D of equal length")
        if self.sigma_f < 0:
            raise InvalidParameter("sigma_f must be >= 0")
        object.__setattr__(self, "bias_points", b)
        object.__setattr__(self, "freqs", f)


def decay_probability(delays, t1, contrast, floor):
    """contrast * exp(-tau/T1) + floor, broadcasting delays along rows."""
    return contrast * np.exp(-np.asarray(delays)[:, None] / np.atleast_1d(t1)[None, :]) + floor


def _observe(p, readout: ReadoutModel, rng):
    if readout.analytic:
        return p
    p = np.clip(p, 0.0, 1.0)
    return rng.binomial(readout.shots, p) / readout.shots


def simulate_spectrogram(device: DeviceState, grid: SpectroscopyGrid, readout: ReadoutModel, seed,
                         meta: SpectrogramMeta | None = None) -> Spectrogram:
    fmax = f01_max(device.params)
    if grid.freq_points[-1] > fmax:
        raise GridUnreachable(f"grid reaches {grid.freq_points[-1]:.6f} GHz above f01max={fmax:.6f} GHz")
    t1 = t1_at_frequency(device, grid.freq_points)
    p = decay_probability(grid.delay_points, t1, readout.contrast, readout.floor)
    values = _observe(p, readout, rng_from(seed))
    if meta is None:
        meta = SpectrogramMeta(cycle=device.cycle_index, clock_hours=device.clock)
    return Spectrogram(grid, values, meta)


def simulate_arch_scan(device: DeviceState, bias_points, sigma_f: float, seed) -> ArchScan:
    """Measured sweet-spot arch; ``sigma_f`` is the per-point noise in MHz."""
    bias = np.asarray(bias_points, dtype=float)
    freqs = f01_at_flux(device.params, flux_from_bias(device.flux_line, bias))
    freqs = np.atleast_1d(freqs)
    if sigma_f > 0:
        freqs = freqs + rng_from(seed).normal(0.0, sigma_f * 1e-3, freqs.shape)
    return ArchScan(bias, freqs, sigma_f, device.flux_line.mutual)


def simulate_t1_trace(device: DeviceState, f: float, delays, readout: ReadoutModel, seed) -> np.ndarray:
    delays = np.asarray(delays, dtype=float)
    if np.any(np.diff(delays) <= 0):
        raise InvalidParameter("delays must be increasing")
    t1 = t1_at_frequency(device, f)
    p = decay_probability(delays, t1, readout.contrast, readout.floor)[:, 0]
    return _observe(p, readout, rng_from(seed))
