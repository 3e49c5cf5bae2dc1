"""Phase-space hydrodynamics of Wigner and Husimi densities."""

from .action import (Label, VariationProfile, default_labels, evaluate_action, prepare_action,
                     stationarity_scan, variation_identity_check)
from .algebra import FluxField, husimi_star, moyal_product, poisson_apply, smoothing_product
from .bopp import bopp_left, bopp_propagate, bopp_right, classical_limit_residual, commutator_residual
from .config import build_state, load_config, parse_config
from .dynamics import Trajectory, propagate
from .errors import HusimiFlowError
from .flux import (GaugeSpec, advect_labels, continuity_residual, default_flux, gauge_flux,
                   internal_gauge_shift, trace_parcels, velocity_from_flux)
from .grid import Axis, Field, Grid, box_grid, gaussian_smooth, make_grid
from .states import (Representation, State, classical_blob, classical_density, coherent_husimi,
                     coherent_wigner, expectation, fock_husimi, fock_wigner, mixture, purity_residual,
                     smooth_state)
from .symbols import PolySymbol, husimi_symbol, parse_poly

__version__ = "0.1.0"

__all__ = [
    "Axis", "Field", "FluxField", "GaugeSpec", "Grid", "HusimiFlowError", "Label", "PolySymbol",
    "Representation", "State", "Trajectory", "VariationProfile", "advect_labels", "bopp_left",
    "bopp_propagate", "bopp_right", "box_grid", "build_state", "classical_blob", "classical_density",
    "classical_limit_residual", "coherent_husimi", "coherent_wigner", "commutator_residual",
    "continuity_residual", "default_flux", "default_labels", "evaluate_action", "expectation",
    "fock_husimi", "fock_wigner", "gauge_flux", "gaussian_smooth", "husimi_star", "husimi_symbol",
    "internal_gauge_shift", "load_config", "make_grid", "mixture", "moyal_product", "parse_config",
    "parse_poly", "poisson_apply", "prepare_action", "propagate", "purity_residual", "smooth_state",
    "smoothing_product", "stationarity_scan", "trace_parcels", "variation_identity_check",
    "velocity_from_flux",
]
