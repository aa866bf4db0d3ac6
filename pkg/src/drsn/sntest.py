"""Self-normalized test for a relevant L2 difference between two conditional
distribution functions at a fixed covariate point."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import CdfField, CovariatePoint, EvalGrid


@dataclass(frozen=True)
class DeltaField:
    values: np.ndarray
    grid: EvalGrid
    point: CovariatePoint


@dataclass(frozen=True)
class TestReport:
    t_stat: float
    v_stat: float
    delta: float
    delta_sq: float
    alpha: float
    quantile: float
    reject: bool
    p_value: float
    delta_hat_alpha: float
    ci_lower: float
    diagnostics: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict:
        return asdict(self)


def delta_field(f1: CdfField, f2: CdfField) -> DeltaField:
    """Pointwise difference F1(t, y | x) - F2(t, y | x)."""
    if not f1.grid.same_as(f2.grid):
        raise ValueError("the two CDF fields live on different grids")
    if f1.point != f2.point:
        raise ValueError("the two CDF fields are evaluated at different covariate points")
    return DeltaField(f1.values - f2.values, f1.grid, f1.point)


def squared_norms(d: DeltaField) -> np.ndarray:
    """Integral over I of the squared difference, one value per fraction node."""
    # row-wise sums keep rows with equal entries bitwise equal
    return (d.values ** 2 * d.grid.y_weights).sum(axis=-1)


def t_statistic(d: DeltaField) -> float:
    return float(squared_norms(d)[-1])


def v_statistic(d: DeltaField) -> float:
    """Self-normalizer V (not V squared)."""
    s = squared_norms(d)
    dev = (s - s[-1]) ** 2
    return math.sqrt(float(dev @ d.grid.t_weights))


def decide(t_stat: float, v_stat: float, delta_sq: float, q: float,
           samples: np.ndarray):
    """Decision, p-value and minimal rejectable threshold from (T, V)."""
    crit = delta_sq + q * v_stat
    reject = bool(t_stat > crit)
    if v_stat > 0:
        stat = (t_stat - delta_sq) / v_stat
        j = np.searchsorted(samples, stat, side="right")
        p_value = float(samples.size - j) / samples.size
    else:
        reject = bool(t_stat > delta_sq)
        p_value = 0.0 if reject else 1.0
    dha = math.sqrt(max(t_stat - q * v_stat, 0.0))
    return reject, p_value, dha


def run_test(d: DeltaField, delta: float, alpha: float, wq,
             diagnostics: dict | None = None) -> TestReport:
    """Reject H0: ||F1 - F2||_2 <= delta when T > delta^2 + q_{1-alpha} V."""
    from .limit import quantile

    if not delta >= 0:
        raise ValueError("delta must be >= 0")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if wq.epsilon != d.grid.epsilon:
        raise ValueError(
            f"limit samples were simulated for epsilon={wq.epsilon}, "
            f"statistic uses epsilon={d.grid.epsilon}")
    return report_from_stats(t_statistic(d), v_statistic(d), delta, alpha,
                             quantile(wq, 1 - alpha), wq.samples,
                             {**(diagnostics or {}), "grid": d.grid.describe(),
                              "epsilon": d.grid.epsilon})


def report_from_stats(t_stat: float, v_stat: float, delta: float, alpha: float,
                      q: float, samples: np.ndarray,
                      diagnostics: dict | None = None) -> TestReport:
    delta_sq = float(delta) ** 2
    reject, p, dha = decide(t_stat, v_stat, delta_sq, q, samples)
    return TestReport(float(t_stat), float(v_stat), float(delta), delta_sq,
                      float(alpha), float(q), reject, p, dha, dha,
                      dict(diagnostics or {}))


def p_value_curve(t_stat: float, v_stat: float, delta_sq_grid, samples) -> np.ndarray:
    """p-value as a function of the squared threshold; nondecreasing."""
    return np.array([decide(t_stat, v_stat, float(d2), 0.0, samples)[1]
                     for d2 in delta_sq_grid])
