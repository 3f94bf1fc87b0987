"""Simulation and analysis of a quasi-phase-matched SPDC photon-pair source."""

__version__ = "0.1.0"

from ._core import BACKEND
from .coincidence import (CarResult, CoincidenceHistogram, Correlator, HistogramConfig, car_pcr,
                          car_scan, correlate, predicted_car)
from .detection import DetectionChain, detect, simulate_tag_stream, simulate_tags
from .dispersion import (CESpectrum, DispersionModel, GratingParams, ModeAreas, ce_spectrum,
                         conversion_efficiency, default_dispersion, delta_k, qpm_period_for)
from .fitting import FitResult, fit_ce_spectrum, fit_fringe, fit_inverse_law, violates_bell
from .franson import FransonConfig, fringe_scan, outcome_probabilities, transform_pairs
from .rng import CounterRNG
from .scenario import Scenario, load_scenario
from .source import SourceSpec, generate_pairs
from .tags import TimeTagStream

__all__ = [
    "BACKEND", "CESpectrum", "CarResult", "CoincidenceHistogram", "Correlator", "CounterRNG",
    "DetectionChain", "DispersionModel", "FitResult", "FransonConfig", "GratingParams",
    "HistogramConfig", "ModeAreas", "Scenario", "SourceSpec", "TimeTagStream", "car_pcr",
    "car_scan", "ce_spectrum", "conversion_efficiency", "correlate", "default_dispersion",
    "delta_k", "detect", "fit_ce_spectrum", "fit_fringe", "fit_inverse_law", "fringe_scan",
    "generate_pairs", "load_scenario", "outcome_probabilities", "predicted_car", "qpm_period_for",
    "simulate_tag_stream", "simulate_tags", "transform_pairs", "violates_bell",
]
