"""Causal exposure-response curves under unmeasured confounding.

A probit stick-breaking mixture of linear regressions is fit by Gibbs
sampling; negative-control exposure (``z``) and outcome (``w``) variables
remove the confounding bias component by component.
"""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    CerfEstimate, CerfGrid, Dataset, ModelConfig, ParameterState, PriorSpec,
    load_csv, save_csv, standardize)
from .errors import (  # noqa: E402
    ConfigError, IdentificationError, NCCerfError, NumericalError,
    ValidationError)
from .gibbs import ChainOutput, run_chain  # noqa: E402
from .identification import cerf_draw, component_effect, summarize  # noqa: E402
from .baselines import (  # noqa: E402
    assumption_tests, fit, fit_bnp_nc, fit_yx, fit_yxu, linear_generator,
    linear_nc)
from .simulation import Scenario, simulate, true_cerf, run_replications  # noqa: E402

__all__ = [
    "CerfEstimate", "CerfGrid", "ChainOutput", "ConfigError", "Dataset",
    "IdentificationError", "ModelConfig", "NCCerfError", "NumericalError",
    "ParameterState", "PriorSpec", "Scenario", "ValidationError",
    "assumption_tests", "cerf_draw", "component_effect", "fit", "fit_bnp_nc",
    "fit_yx", "fit_yxu", "linear_generator", "linear_nc", "load_csv", "run_chain",
    "run_replications", "save_csv", "simulate", "standardize", "summarize",
    "true_cerf",
]
