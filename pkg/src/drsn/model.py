"""Domain types: samples, link functions, evaluation grids and fitted fields."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

CLIP = 1e-12

# integer codes understood by the kernels
LINK_NORMAL = 0
LINK_LOGISTIC = 1


class Status(enum.IntEnum):
    """Per-cell outcome of a threshold fit."""

    CONVERGED = 0
    ALL_BELOW = 1
    ALL_ABOVE = 2
    FAILED = 3


@dataclass(frozen=True)
class Sample:
    """Observations of one group, rows in stored order.

    ``design`` carries the intercept column explicitly; use
    :meth:`from_covariates` to have it prepended.
    """

    outcomes: np.ndarray
    design: np.ndarray
    group_label: object = 1

    def __post_init__(self):
        y = np.ascontiguousarray(self.outcomes, dtype=np.float64)
        X = np.ascontiguousarray(self.design, dtype=np.float64)
        if y.ndim != 1 or y.size < 1:
            raise ValueError("outcomes must be a non-empty vector")
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError("design must be a 2-d array with at least one column")
        if X.shape[0] != y.size:
            raise ValueError(
                f"design has {X.shape[0]} rows but there are {y.size} outcomes")
        if not np.all(np.isfinite(y)):
            raise ValueError("outcomes contain non-finite values")
        if not np.all(np.isfinite(X)):
            raise ValueError("design contains non-finite values")
        y.flags.writeable = False
        X.flags.writeable = False
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "design", X)

    @classmethod
    def from_covariates(cls, outcomes, covariates=None, group_label=1,
                        intercept: bool = True) -> "Sample":
        y = np.asarray(outcomes, dtype=np.float64)
        if covariates is None:
            cov = np.empty((y.size, 0))
        else:
            cov = np.asarray(covariates, dtype=np.float64)
            if cov.ndim == 1:
                cov = cov[:, None]
        if intercept:
            cov = np.column_stack([np.ones(y.size), cov])
        return cls(y, cov, group_label)

    @property
    def n(self) -> int:
        return self.outcomes.size

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def head(self, k: int) -> "Sample":
        return Sample(self.outcomes[:k], self.design[:k], self.group_label)


@dataclass(frozen=True)
class LinkSpec:
    """Known link CDF with its density.

    ``kind`` is one of ``standard_normal``, ``logistic_unit`` or
    ``normal_scaled`` (the latter needs ``sigma2 > 0``).
    """

    kind: str = "standard_normal"
    sigma2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("standard_normal", "logistic_unit", "normal_scaled"):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.kind == "normal_scaled":
            if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
                raise ValueError("normal_scaled needs sigma2 > 0")
        else:
            object.__setattr__(self, "sigma2", 1.0)

    @classmethod
    def standard_normal(cls) -> "LinkSpec":
        return cls("standard_normal")

    @classmethod
    def logistic_unit(cls) -> "LinkSpec":
        return cls("logistic_unit")

    @classmethod
    def normal_scaled(cls, sigma2: float) -> "LinkSpec":
        return cls("normal_scaled", float(sigma2))

    @property
    def code(self) -> int:
        return LINK_LOGISTIC if self.kind == "logistic_unit" else LINK_NORMAL

    @property
    def scale(self) -> float:
        return math.sqrt(self.sigma2)

    def cdf(self, a):
        a = np.asarray(a, dtype=np.float64)
        if self.code == LINK_LOGISTIC:
            return special.expit(a)
        return special.ndtr(a / self.scale)

    def pdf(self, a):
        a = np.asarray(a, dtype=np.float64)
        if self.code == LINK_LOGISTIC:
            L = special.expit(a)
            return L * (1.0 - L)
        u = a / self.scale
        return np.exp(-0.5 * u * u) / (math.sqrt(2.0 * math.pi) * self.scale)

    def describe(self) -> str:
        if self.kind == "normal_scaled":
            return f"normal_scaled({self.sigma2!r})"
        return self.kind


def link_eval(link: LinkSpec, a: float) -> tuple[float, float]:
    """Return ``(cdf, pdf)`` at ``a``, the cdf clipped away from 0 and 1."""
    cdf = float(np.clip(link.cdf(a), CLIP, 1.0 - CLIP))
    return cdf, float(link.pdf(a))


@dataclass(frozen=True)
class EvalGrid:
    """Outcome nodes with quadrature weights, and fraction nodes on [eps, 1]."""

    y_nodes: np.ndarray
    y_weights: np.ndarray
    finite: bool
    epsilon: float
    t_nodes: np.ndarray
    t_weights: np.ndarray

    @property
    def n_y(self) -> int:
        return self.y_nodes.size

    @property
    def n_t(self) -> int:
        return self.t_nodes.size

    @property
    def interval(self):
        if self.finite:
            return None
        return float(self.y_nodes[0]), float(self.y_nodes[-1])

    def prefix_sizes(self, n: int) -> np.ndarray:
        # tiny guard so that e.g. 200 * 0.1 does not floor to 19
        return np.floor(n * self.t_nodes + 1e-9).astype(np.int64)

    def same_as(self, other: "EvalGrid") -> bool:
        return (self.finite == other.finite and self.epsilon == other.epsilon
                and np.array_equal(self.y_nodes, other.y_nodes)
                and np.array_equal(self.t_nodes, other.t_nodes))

    def describe(self) -> dict:
        d = {"epsilon": self.epsilon, "n_t": self.n_t, "n_y": self.n_y,
             "finite": self.finite}
        if self.finite:
            d["y_values"] = self.y_nodes.tolist()
        else:
            d["y_lo"], d["y_hi"] = self.interval
        return d


def trapezoid_weights(lo: float, hi: float, n: int) -> np.ndarray:
    w = np.full(n, (hi - lo) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def make_grid(y_spec, epsilon: float = 0.1, n_t: int = 50) -> EvalGrid:
    """Build an :class:`EvalGrid`.

    ``y_spec`` is either ``(y_lo, y_hi, n_y)`` for an interval with equally
    spaced nodes (trapezoid weights), or a sequence of outcome values for a
    finite set (unit weights).
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n_t < 2:
        raise ValueError("n_t must be at least 2")
    if isinstance(y_spec, dict):
        if "finite" in y_spec:
            y_spec = y_spec["finite"]
        else:
            y_spec = (*y_spec["interval"], y_spec["n_y"])
    if isinstance(y_spec, tuple) and len(y_spec) == 3 and isinstance(y_spec[2], (int, np.integer)):
        lo, hi, n_y = float(y_spec[0]), float(y_spec[1]), int(y_spec[2])
        if not lo < hi:
            raise ValueError(f"need y_lo < y_hi, got [{lo}, {hi}]")
        if n_y < 2:
            raise ValueError("n_y must be at least 2")
        nodes = np.linspace(lo, hi, n_y)
        weights = trapezoid_weights(lo, hi, n_y)
        finite = False
    else:
        nodes = np.asarray(y_spec, dtype=np.float64).ravel()
        if nodes.size == 0:
            raise ValueError("finite outcome set is empty")
        if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0):
            raise ValueError("finite outcome values must be finite and strictly increasing")
        weights = np.ones(nodes.size)
        finite = True
    t = epsilon + np.arange(n_t) * (1.0 - epsilon) / (n_t - 1)
    t[-1] = 1.0
    tw = trapezoid_weights(epsilon, 1.0, n_t)
    for arr in (nodes, weights, t, tw):
        arr.flags.writeable = False
    return EvalGrid(nodes, weights, finite, float(epsilon), t, tw)


@dataclass(frozen=True)
class CovariatePoint:
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64).ravel()
        if x.size < 1 or not np.all(np.isfinite(x)):
            raise ValueError("covariate point must be a finite, non-empty vector")
        x.flags.writeable = False
        object.__setattr__(self, "x", x)

    def __eq__(self, other):
        return isinstance(other, CovariatePoint) and np.array_equal(self.x, other.x)

    __hash__ = None


@dataclass(frozen=True)
class CoefficientField:
    """Sequential estimates beta(t_j, y_k), shape ``(n_t, n_y, p)``."""

    values: np.ndarray
    status: np.ndarray
    link: LinkSpec
    grid: EvalGrid
    prefix_sizes: np.ndarray
    iterations: np.ndarray = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.values.shape[2]

    def full_sample(self) -> np.ndarray:
        """beta(1, y) for every outcome node."""
        return self.values[-1]

    def counts(self) -> dict:
        return {s.name.lower(): int(np.sum(self.status == s)) for s in Status}


@dataclass(frozen=True)
class CdfField:
    values: np.ndarray
    point: CovariatePoint
    grid: EvalGrid
    n_interpolated: int = 0
