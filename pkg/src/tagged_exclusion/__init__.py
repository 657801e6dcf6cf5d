"""Tagged particle variance in exclusion processes: simulation, exact solves,
coefficient duality and Fourier bounds."""

from .config import ConfigError, ExperimentConfig, load_config
from .lattice import DensityParams, JumpRates, ReferenceConfig, build_nn_rates, drift_value
from .simulator import (InitialMeasure, check_variance_identity, estimate_variance,
                        martingale_diagnostics, simulate_batch)
from .exact import (StateSpace, build_generator, laplace_variance, resolvent_solve,
                    verify_comparisons, verify_lower_bound, verify_variational)
from .duality import (CoefficientFunction, LocalObservable, apply_A_nn_degree,
                      apply_coefficient_operator, duality_oracle, psi_expand)
from .spectral import (SpectralGrid, bound_scan, eval_bound_integrals, mainprop_bound,
                       minimizer_g_lambda, verify_prop_FT)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config",
    "DensityParams", "JumpRates", "ReferenceConfig", "build_nn_rates", "drift_value",
    "InitialMeasure", "check_variance_identity", "estimate_variance", "martingale_diagnostics",
    "simulate_batch",
    "StateSpace", "build_generator", "laplace_variance", "resolvent_solve",
    "verify_comparisons", "verify_lower_bound", "verify_variational",
    "CoefficientFunction", "LocalObservable", "apply_A_nn_degree", "apply_coefficient_operator",
    "duality_oracle", "psi_expand",
    "SpectralGrid", "bound_scan", "eval_bound_integrals", "mainprop_bound",
    "minimizer_g_lambda", "verify_prop_FT",
]
