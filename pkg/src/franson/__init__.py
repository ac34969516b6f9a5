"""Franson-interferometer simulator: pair source, unbalanced MZIs, time tags,
coincidence selection and Bell-test analysis."""

from franson.analysis import (
    ChshResult,
    FringeScan,
    chsh_S,
    compare_report,
    correlation_E,
    fit_fringe,
)
from franson.coincidence import CoincidenceWindow, delay_histogram, match_coincidences
from franson.event_sim import DetectorModel, TimeTagStream, sample_outcome, simulate_streams
from franson.experiment import ExperimentConfig
from franson.interferometer import (
    NmziConfig,
    gated_correlation_mean,
    joint_probability_table,
    local_intensity,
    local_mean_intensity,
    port_amplitudes,
    ungated_correlation_mean,
)
from franson.spdc_source import SpectralModel, sample_pairs, validate_regime

__all__ = [
    "ChshResult", "CoincidenceWindow", "DetectorModel", "ExperimentConfig", "FringeScan",
    "NmziConfig", "SpectralModel", "TimeTagStream", "chsh_S", "compare_report",
    "correlation_E", "delay_histogram", "fit_fringe", "gated_correlation_mean",
    "joint_probability_table", "local_intensity", "local_mean_intensity",
    "match_coincidences", "port_amplitudes", "sample_outcome", "sample_pairs",
    "simulate_streams", "ungated_correlation_mean", "validate_regime",
]
