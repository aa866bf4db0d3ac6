"""Simulation scenarios, the true-distance oracle and the rejection-probability
experiment driver."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, special

from .limit import WSampleSet, quantile
from .mle import FitError, FitOptions, cdf_field, fit_field
from .model import CovariatePoint, LinkSpec, Sample, make_grid
from .sntest import DeltaField, decide, squared_norms

SCENARIOS = ("scen1", "scen2a", "scen2b", "scen1_mislink", "local_alt")
BASE_SHIFT = 0.7
CENSOR_AT = 4.0
ORACLE_NODES = 100_001


@dataclass(frozen=True)
class CondLaw:
    """Location-scale conditional law of Y given X = x, optionally max(Y, c)."""

    loc: float
    scale: float
    family: str = "normal"
    censor_at: float | None = None

    def cdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        u = (y - self.loc) / self.scale
        if self.family == "normal":
            F = special.ndtr(u)
        elif self.family == "logistic":
            F = special.expit(u)
        else:
            raise ValueError(f"unsupported model family {self.family!r}")
        if self.censor_at is not None:
            F = np.where(y < self.censor_at, 0.0, F)
        return F


def _trapz(f, lo, hi, n):
    y = np.linspace(lo, hi, n)
    v = f(y)
    h = (hi - lo) / (n - 1)
    return h * (v.sum() - 0.5 * (v[0] + v[-1]))


def true_distance(model1: CondLaw, model2: CondLaw, interval, nodes: int = ORACLE_NODES) -> float:
    """Squared L2 distance of the two conditional CDFs over ``interval``.

    Composite trapezoid; a censoring jump inside the interval splits it so
    that each piece has a continuous integrand.
    """
    lo, hi = map(float, interval)
    for m in (model1, model2):
        if m.family not in ("normal", "logistic"):
            raise ValueError(f"unsupported model family {m.family!r}")
    cuts = sorted({c for c in (model1.censor_at, model2.censor_at)
                   if c is not None and lo < c < hi})
    edges = [lo, *cuts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        # at a cut the CDF jumps; the piece ending there takes the left limit
        def f(y, b=b):
            if b != hi:
                y = np.where(y == b, np.nextafter(b, -np.inf), y)
            return (model1.cdf(y) - model2.cdf(y)) ** 2
        total += _trapz(f, a, b, max(3, int(nodes * (b - a) / (hi - lo))))
    return float(total)


@dataclass(frozen=True)
class ScenarioSpec:
    id: str = "scen1"
    n: int = 500
    sigma2: float = 1.0
    x_eval: CovariatePoint | None = None
    outcome_interval: tuple = None
    fit_link: LinkSpec | None = None
    true_link: LinkSpec | None = None
    local_delta: float = 0.0

    def __post_init__(self):
        if self.id not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.id!r}; choose from {SCENARIOS}")
        if self.n < 100:
            raise ValueError("scenario sample size must be >= 100")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.local_delta < 0:
            raise ValueError("local_delta must be >= 0")
        two = self.id in ("scen2a", "scen2b")
        if self.x_eval is None:
            object.__setattr__(self, "x_eval", CovariatePoint(np.ones(5 if two else 2)))
        if self.outcome_interval is None:
            object.__setattr__(self, "outcome_interval", (2.0, 8.0) if two else (-1.0, 5.0))
        if self.id == "scen1_mislink":
            fl, tl = LinkSpec.standard_normal(), LinkSpec.logistic_unit()
        else:
            fl = tl = LinkSpec.normal_scaled(self.sigma2)
        if self.fit_link is None:
            object.__setattr__(self, "fit_link", fl)
        if self.true_link is None:
            object.__setattr__(self, "true_link", tl)

    @property
    def p(self) -> int:
        return 5 if self.id in ("scen2a", "scen2b") else 2

    def _law(self, intercept: float) -> CondLaw:
        x = self.x_eval.x
        if self.id in ("scen2a", "scen2b"):
            loc = intercept + x[1] + x[2] + x[2] ** 2 + x[4]
        else:
            loc = intercept + x[1]
        if self.true_link.kind == "logistic_unit":
            return CondLaw(loc, 1.0, "logistic")
        return CondLaw(loc, self.true_link.scale, "normal",
                       CENSOR_AT if self.id == "scen2b" else None)

    def null_margin(self) -> float:
        """Squared threshold at the boundary of the null hypothesis."""
        if self.id == "local_alt":
            return true_distance(self._law(1.0), self._law(1.0 + BASE_SHIFT),
                                 self.outcome_interval)
        return self.true_sq_distance()

    def group2_intercept(self) -> float:
        if self.id != "local_alt":
            return 1.0 + BASE_SHIFT
        target = math.sqrt(self.null_margin()) + self.local_delta / math.sqrt(2 * self.n)
        return 1.0 + local_shift(self, target)

    def true_sq_distance(self) -> float:
        return true_distance(self._law(1.0), self._law(self.group2_intercept()),
                             self.outcome_interval)

    def laws(self) -> tuple[CondLaw, CondLaw]:
        return self._law(1.0), self._law(self.group2_intercept())


def local_shift(spec: ScenarioSpec, target_distance: float) -> float:
    """Group-2 intercept shift s with L2 distance sqrt(true_distance) = target."""
    f1 = spec._law(1.0)

    def gap(s):
        f2 = replace(f1, loc=f1.loc + s)
        return math.sqrt(true_distance(f1, f2, spec.outcome_interval)) - target_distance

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2
        if hi > 64:
            raise ValueError(f"no shift attains L2 distance {target_distance}; delta infeasible")
    return optimize.brentq(gap, 0.0, hi, xtol=1e-14, rtol=1e-14)


def _draw_group(spec: ScenarioSpec, rng: np.random.Generator, intercept: float,
                label) -> Sample:
    n, s2 = spec.n, spec.sigma2
    sd = math.sqrt(s2)
    if spec.id in ("scen2a", "scen2b"):
        cov = s2 * np.array([[1.0, 0.5], [0.5, 1.0]])
        x23 = rng.multivariate_normal(np.zeros(2), cov, size=n, method="cholesky")
        x4 = rng.binomial(1, 0.5, size=n).astype(np.float64)
        u = sd * rng.standard_normal(n)
        x2, x3 = x23[:, 0], x23[:, 1]
        y = intercept + x2 + x3 + x3 ** 2 + x4 + u
        if spec.id == "scen2b":
            y = np.maximum(y, CENSOR_AT)
        return Sample.from_covariates(y, np.column_stack([x2, x3, x3 ** 2, x4]), label)
    x2 = rng.standard_normal(n)
    if spec.id == "scen1_mislink":
        u = rng.logistic(0.0, 1.0, size=n)
    else:
        u = sd * rng.standard_normal(n)
    return Sample.from_covariates(intercept + x2 + u, x2, label)


def generate(spec: ScenarioSpec, seed, intercept2: float | None = None) -> tuple[Sample, Sample]:
    """Draw both groups; ``seed`` is an int or a ``SeedSequence``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # explicit children: SeedSequence.spawn would mutate ``ss``
    s1, s2 = (np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, g)) for g in (0, 1))
    if intercept2 is None:
        intercept2 = spec.group2_intercept()
    g1 = _draw_group(spec, np.random.default_rng(s1), 1.0, 1)
    g2 = _draw_group(spec, np.random.default_rng(s2), intercept2, 2)
    return g1, g2


# ---------------------------------------------------------------------------
# rejection-probability experiment
# ---------------------------------------------------------------------------

@dataclass
class RejectionCurve:
    delta_sq_grid: np.ndarray
    rates: np.ndarray
    reps: int
    margin: float
    alpha: float
    epsilon: float
    n: int
    scenario: str
    t_stats: np.ndarray = field(default=None, repr=False)
    v_stats: np.ndarray = field(default=None, repr=False)
    rejections: np.ndarray = field(default=None, repr=False)
    dropped: int = 0
    failed_cells: int = 0
    pvalue_curve: np.ndarray = field(default=None, repr=False)

    def rows(self):
        for d2, r in zip(self.delta_sq_grid, self.rates):
            yield {"delta_sq": float(d2), "rate": float(r), "reps": self.reps,
                   "margin": self.margin, "alpha": self.alpha,
                   "epsilon": self.epsilon, "n": self.n, "scenario": self.scenario}


def one_replication(spec: ScenarioSpec, grid, opts: FitOptions, seed_seq,
                    intercept2: float):
    """Fit both groups on one draw; return (T, V, failed-cell count)."""
    g1, g2 = generate(spec, seed_seq, intercept2)
    f1 = fit_field(g1, grid, spec.fit_link, opts)
    f2 = fit_field(g2, grid, spec.fit_link, opts)
    c1 = cdf_field(f1, spec.x_eval)
    c2 = cdf_field(f2, spec.x_eval)
    d = DeltaField(c1.values - c2.values, grid, spec.x_eval)
    s = squared_norms(d)
    t_stat = float(s[-1])
    v_stat = math.sqrt(float(((s - s[-1]) ** 2) @ grid.t_weights))
    failed = int(np.sum(f1.status == 3) + np.sum(f2.status == 3))
    return t_stat, v_stat, failed


def _run_chunk(args):
    spec, grid, opts, seed, rep_ids, intercept2 = args
    root = np.random.SeedSequence(seed)
    out = []
    for r in rep_ids:
        ss = np.random.SeedSequence(root.entropy, spawn_key=(r,))
        try:
            out.append((r,) + one_replication(spec, grid, opts, ss, intercept2))
        except (FitError, ValueError):
            out.append((r, math.nan, math.nan, 0))
    return out


def replicate_stats(spec: ScenarioSpec, reps: int, epsilon: float, seed: int,
                    n_t: int = 20, n_y: int = 61, workers: int = 1,
                    opts: FitOptions = FitOptions()):
    """Per-replication (T, V) arrays; NaN marks a dropped replication."""
    grid = make_grid((*spec.outcome_interval, n_y), epsilon, n_t)
    intercept2 = spec.group2_intercept()
    ids = list(range(reps))
    if workers > 1:
        chunks = [ids[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_chunk, [(spec, grid, opts, seed, c, intercept2)
                                             for c in chunks]))
        rows = sorted(r for part in parts for r in part)
    else:
        rows = _run_chunk((spec, grid, opts, seed, ids, intercept2))
    T = np.array([r[1] for r in rows])
    V = np.array([r[2] for r in rows])
    failed = int(sum(r[3] for r in rows))
    return T, V, failed


def rejection_experiment(spec: ScenarioSpec, delta_sq_grid, reps: int,
                         alpha: float, epsilon: float, wq: WSampleSet,
                         seed: int, n_t: int = 20, n_y: int = 61,
                         workers: int = 1, opts: FitOptions = FitOptions(),
                         max_drop: float = 0.01) -> RejectionCurve:
    """Empirical rejection frequencies over a grid of squared thresholds.

    One fit per replication serves every threshold, since T and V do not
    depend on it.
    """
    if wq.epsilon != epsilon:
        raise ValueError(f"limit samples use epsilon={wq.epsilon}, experiment uses {epsilon}")
    grid_d2 = np.asarray(delta_sq_grid, dtype=np.float64)
    T, V, failed = replicate_stats(spec, reps, epsilon, seed, n_t, n_y, workers, opts)
    ok = np.isfinite(T) & np.isfinite(V)
    dropped = int(reps - ok.sum())
    if dropped > max_drop * reps:
        raise RuntimeError(f"{dropped} of {reps} replications dropped (> {max_drop:.0%})")
    q = quantile(wq, 1 - alpha)
    rej = np.zeros((reps, grid_d2.size), dtype=bool)
    for i in np.flatnonzero(ok):
        for j, d2 in enumerate(grid_d2):
            rej[i, j] = decide(T[i], V[i], d2, q, wq.samples)[0]
    rates = rej[ok].mean(axis=0)
    first = int(np.flatnonzero(ok)[0])
    pcurve = np.array([decide(T[first], V[first], d2, q, wq.samples)[1] for d2 in grid_d2])
    return RejectionCurve(grid_d2, rates, int(ok.sum()), spec.null_margin(), alpha,
                          epsilon, spec.n, spec.id, T, V, rej, dropped, failed, pcurve)


def default_workers() -> int:
    return int(os.environ.get("DRSN_WORKERS", "1"))
