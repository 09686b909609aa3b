"""Semi-local CSG EMOS, quantile mapping and verification for dual-resolution ensembles."""

from .csg import CsgParams, csg_crps, csg_crps_quadrature, empirical_crps
from .emos import EmosCoefficients, FitReport, fit, fit_arrays
from .ensemble import Dataset, EnsembleForecast, ForecastCase, MixtureConfig
from .errors import ConfigError, CsgEmosError, DataError, NumericError
from .synth import ScenarioConfig, generate

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CsgEmosError",
    "CsgParams",
    "DataError",
    "Dataset",
    "EmosCoefficients",
    "EnsembleForecast",
    "FitReport",
    "ForecastCase",
    "MixtureConfig",
    "NumericError",
    "ScenarioConfig",
    "csg_crps",
    "csg_crps_quadrature",
    "empirical_crps",
    "fit",
    "fit_arrays",
    "generate",
]
