"""Self-normalized two-sample tests for relevant differences between
conditional distribution functions estimated by distribution regression."""

from ._accel import USE_NUMBA
from .limit import WSampleSet, load_or_simulate, quantile, simulate_w
from .mle import FitError, FitOptions, cdf_field, fit_at_threshold, fit_field
from .model import (CdfField, CoefficientField, CovariatePoint, EvalGrid,
                    LinkSpec, Sample, Status, make_grid)
from .sntest import (DeltaField, TestReport, delta_field, p_value_curve,
                     run_test, t_statistic, v_statistic)

__version__ = "0.1.0"

__all__ = [
    "CdfField", "CoefficientField", "CovariatePoint", "DeltaField", "EvalGrid",
    "FitError", "FitOptions", "LinkSpec", "Sample", "Status", "TestReport",
    "USE_NUMBA", "WSampleSet", "cdf_field", "delta_field", "fit_at_threshold",
    "fit_field", "load_or_simulate", "make_grid", "p_value_curve", "quantile",
    "run_test", "simulate_w", "t_statistic", "v_statistic", "__version__",
]
