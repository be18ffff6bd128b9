"""Simulation and analysis of T1 spectral topography stability across thermal cycles."""

__version__ = "0.1.0"

from .analysis import (AnalysisConfig, NormalizedMap, StfReport, calibrate_alpha, pearson,
                       spectral_divergence, stf, zscore_normalize)
from .experiment import ExperimentPlan, ExperimentRecord, run_longitudinal, stf_matrix, summarize_decay
from .fitting import fit_arch, fit_t1
from .measurement import ReadoutModel, Spectrogram, SpectroscopyGrid, simulate_spectrogram
from .model import BathPrior, CyclePerturbation, DeviceState, TransmonParams

__all__ = [
    "AnalysisConfig", "BathPrior", "CyclePerturbation", "DeviceState", "ExperimentPlan",
    "ExperimentRecord", "NormalizedMap", "ReadoutModel", "Spectrogram", "SpectroscopyGrid",
    "StfReport", "TransmonParams", "calibrate_alpha", "fit_arch", "fit_t1", "pearson",
    "run_longitudinal", "simulate_spectrogram", "spectral_divergence", "stf", "stf_matrix",
    "summarize_decay", "zscore_normalize",
]
