"""windcal: quantile-matching calibration of simulated environmental fields.

Simulated panels (e.g. daily-maximum wind speed from a numerical weather
simulator) are brought in line with sparse station observations via
conditional quantile matching under a bounded-tail extended Generalized
Pareto model whose per-cell endpoints share latent spatial and temporal
Gaussian fields, fitted by MCMC.
"""

__version__ = "0.1.0"

from .calibration import CalibrationMap, EmpiricalCdf, conditional_calibrate, marginal_calibrate
from .data import PanelData, SyntheticTruth, generate_synthetic, load_network, load_panel
from .draws import PosteriorDraws
from .egpd import (
    EgpdParams,
    GpdParams,
    egpd_cdf,
    egpd_logpdf,
    egpd_quantile,
    egpd_sample,
    gpd_cdf,
)
from .errors import DataValidationError, DomainError, NumericalError, WindcalError
from .latent import StationNetwork, rw1_logdensity, spatial_correlation, spatial_logdensity
from .model import HierarchicalModel, McmcConfig, ModelState, MwgSampler, PriorSpec, run_mcmc
from .predictive import CalibratedField, calibrate_field, export_figures, summarize_posterior
