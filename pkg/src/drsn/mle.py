"""Threshold-wise maximum likelihood for distribution regression.

At every outcome node y the binary responses 1{Y <= y} are regressed on the
design by maximum likelihood; repeating this on the first floor(n t) rows
gives the sequential field beta(t, y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import (CdfField, CoefficientField, CovariatePoint, EvalGrid,
                    LinkSpec, Sample, Status)


class FitError(RuntimeError):
    """Raised when no usable full-sample fit exists."""


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 100
    grad_tol: float = 1e-8
    step_halving_max: int = 30
    init: object = "zeros"

    def __post_init__(self):
        if self.max_iter < 1 or self.step_halving_max < 1:
            raise ValueError("iteration caps must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")

    def start(self, p: int) -> np.ndarray:
        if isinstance(self.init, str):
            if self.init != "zeros":
                raise ValueError(f"unknown init {self.init!r}")
            return np.zeros(p)
        b = np.asarray(self.init, dtype=np.float64).ravel()
        if b.size != p:
            raise ValueError(f"init has length {b.size}, design has {p} columns")
        return b.copy()


def fit_at_threshold(sample: Sample, y: float, link: LinkSpec,
                     opts: FitOptions = FitOptions(), k: int | None = None,
                     init=None) -> tuple[np.ndarray, Status]:
    """Fit beta(y) on the first ``k`` rows (all rows by default)."""
    k = sample.n if k is None else int(k)
    if not 1 <= k <= sample.n:
        raise ValueError(f"prefix length {k} outside [1, {sample.n}]")
    z = (sample.outcomes <= y).astype(np.float64)
    b0 = opts.start(sample.p) if init is None else np.asarray(init, dtype=np.float64)
    out = np.zeros(sample.p)
    st, _ = kernels.fit_one(sample.design, z, k, b0, link.code, link.scale,
                            opts.max_iter, opts.grad_tol, opts.step_halving_max, out)
    return out, Status(int(st))


def score(sample: Sample, y: float, link: LinkSpec, beta, k: int | None = None) -> np.ndarray:
    """Binary-regression score sum_i x_i (z_i - F) f / (F (1 - F)) over k rows."""
    k = sample.n if k is None else k
    X = sample.design[:k]
    z = (sample.outcomes[:k] <= y).astype(np.float64)
    a = X @ np.asarray(beta, dtype=np.float64)
    F = np.clip(link.cdf(a), 1e-12, 1 - 1e-12)
    return X.T @ ((z - F) * link.pdf(a) / (F * (1 - F)))


def fit_field(sample: Sample, grid: EvalGrid, link: LinkSpec,
              opts: FitOptions = FitOptions()) -> CoefficientField:
    """Sequential estimates on every (t_j, y_k) cell of ``grid``.

    Warm starts: the full-sample row sweeps outward from the median node,
    then each outcome node sweeps the fractions downward from t = 1. Prefixes
    are taken in stored row order.
    """
    ks = grid.prefix_sizes(sample.n)
    if ks[0] < sample.p + 1:
        raise ValueError(
            f"smallest prefix has {ks[0]} rows, need at least p + 1 = {sample.p + 1}; "
            f"increase epsilon or the sample size")
    values, status, iters = kernels.fit_field_kernel(
        sample.design, sample.outcomes, np.ascontiguousarray(grid.y_nodes), ks,
        link.code, link.scale, opts.start(sample.p), opts.max_iter,
        opts.grad_tol, opts.step_halving_max)
    if np.all(status[-1] == Status.FAILED):
        raise FitError("every full-sample threshold fit failed")
    return CoefficientField(values, status, link, grid, ks, iters)


def fit_rows(sample: Sample, y_nodes, link: LinkSpec,
             opts: FitOptions = FitOptions()) -> tuple[np.ndarray, np.ndarray]:
    """Full-sample fits only: ``(beta (n_y, p), status (n_y,))``."""
    ks = np.array([sample.n], dtype=np.int64)
    values, status, _ = kernels.fit_field_kernel(
        sample.design, sample.outcomes, np.ascontiguousarray(y_nodes, dtype=np.float64),
        ks, link.code, link.scale, opts.start(sample.p), opts.max_iter,
        opts.grad_tol, opts.step_halving_max)
    return values[0], status[0]


def _fill_failed(row: np.ndarray, st: np.ndarray, y: np.ndarray) -> int:
    bad = st == Status.FAILED
    if not bad.any():
        return 0
    good = st == Status.CONVERGED
    if not good.any():
        raise FitError("a fraction row has failed cells and no converged cell")
    # np.interp holds the end values constant outside the converged range
    row[bad] = np.interp(y[bad], y[good], row[good])
    return int(bad.sum())


def cdf_field(field: CoefficientField, point: CovariatePoint) -> CdfField:
    """Evaluate F(t, y | x) = link(x' beta(t, y)) on the whole grid."""
    x = point.x
    if x.size != field.p:
        raise ValueError(f"covariate point has length {x.size}, fit has p = {field.p}")
    vals = field.link.cdf(field.values @ x)
    vals = np.where(field.status == Status.ALL_BELOW, 0.0, vals)
    vals = np.where(field.status == Status.ALL_ABOVE, 1.0, vals)
    filled = 0
    for j in range(vals.shape[0]):
        filled += _fill_failed(vals[j], field.status[j], field.grid.y_nodes)
    return CdfField(vals, point, field.grid, filled)
