"""Command-line entry point: ``drsn {test,fit,quantile,mc}``.

Settings come from an optional flat ``key = value`` file (``--config``) whose
keys are :class:`RunConfig` field names; command-line flags override it.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import traceback
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .dataio import (ColumnMap, config_hash, ingest_csv, ingest_single,
                     write_meta, write_report, write_rows)
from .limit import load_or_simulate, quantile, simulate_w, write_cache
from .mle import FitOptions, cdf_field, fit_field
from .model import CovariatePoint, LinkSpec, Status, make_grid
from .sntest import delta_field, run_test

COMMANDS = ("test", "fit", "quantile", "mc")


@dataclass
class RunConfig:
    command: str = "test"
    data: str | None = None
    data2: str | None = None
    outcome: str = "y"
    covariates: str | None = None  # comma separated; default all other columns
    group: str = "group"
    link: str = "standard_normal"
    sigma2: float = 1.0
    interval: str | None = None  # "lo,hi"
    y_values: str | None = None  # finite outcome set, comma separated
    x_eval: str | None = None  # comma separated, intercept included
    delta: float = 0.0
    alpha: float = 0.05
    epsilon: float = 0.1
    n_t: int | None = None  # default 50, or 20 for mc
    n_y: int | None = None  # default 201, or 61 for mc
    paths: int = 200_000
    steps: int = 10_000
    seed: int = 20240101
    cache_dir: str | None = None
    output: str = "report.json"
    format: str = "json"
    scenario: str = "scen1"
    n: int = 500
    reps: int = 1000
    delta_sq_grid: str | None = None  # comma separated; default multiples of the margin
    mc_seed: int = 1
    workers: int = 1
    max_iter: int = 100
    grad_tol: float = 1e-8

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"command must be one of {COMMANDS}, got {self.command!r}")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")
        if self.interval and self.y_values:
            raise ValueError("give either interval or y_values, not both")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _floats(s: str | None):
    if s is None or str(s).strip() == "":
        return None
    return [float(v) for v in str(s).split(",")]


def _coerce(name: str, raw: str):
    f = RunConfig.__dataclass_fields__[name]
    t = f.type if isinstance(f.type, str) else f.type.__name__
    raw = raw.strip()
    if raw.lower() in ("none", "") and "None" in t:
        return None
    if t.startswith("int"):
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    names = {f.name for f in fields(RunConfig)}
    out = {}
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{i}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in names:
                raise ValueError(f"{path}:{i}: unknown key {k!r}")
            out[k] = _coerce(k, v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drsn", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key = value file")
    ap.add_argument("--version", action="version", version=__version__)
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        ap.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                        help=f"(default {f.default!r})")
    return ap


def config_from_args(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    vals = read_config_file(ns.config) if ns.config else {}
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if f.name != "command" and v is not None:
            vals[f.name] = _coerce(f.name, v)
    vals["command"] = ns.command
    return RunConfig(**vals)


def _link(cfg: RunConfig) -> LinkSpec:
    if cfg.link == "normal_scaled":
        return LinkSpec.normal_scaled(cfg.sigma2)
    return LinkSpec(cfg.link)


def _mapping(cfg: RunConfig) -> ColumnMap:
    covs = None if cfg.covariates is None else tuple(c.strip() for c in cfg.covariates.split(",") if c.strip())
    return ColumnMap(cfg.outcome, covs, cfg.group)


def load_samples(cfg: RunConfig):
    if not cfg.data:
        raise ValueError("no input data given (data)")
    m = _mapping(cfg)
    if cfg.data2:
        s1, c1 = ingest_single(cfg.data, m, label="1")
        s2, c2 = ingest_single(cfg.data2, m, label="2")
        if c1 != c2:
            raise ValueError(f"covariate columns differ between files: {c1} vs {c2}")
        return s1, s2, c1
    return ingest_csv(cfg.data, m)


def _grid(cfg: RunConfig, s1, s2):
    if cfg.y_values:
        return make_grid(_floats(cfg.y_values), cfg.epsilon, cfg.n_t or 50)
    if cfg.interval:
        lo, hi = _floats(cfg.interval)
    else:
        pooled = np.concatenate([s1.outcomes, s2.outcomes])
        lo, hi = float(pooled.min()), float(pooled.max())
    return make_grid((lo, hi, cfg.n_y or 201), cfg.epsilon, cfg.n_t or 50)


def _x_eval(cfg: RunConfig, s1, s2) -> CovariatePoint:
    x = _floats(cfg.x_eval)
    if x is None:
        x = np.vstack([s1.design, s2.design]).mean(axis=0)
    return CovariatePoint(x)


def provenance(cfg: RunConfig, grid=None, **extra) -> dict:
    d = {"config_hash": config_hash(cfg.as_dict()), "version": __version__,
         "seeds": {"quantile": cfg.seed, "mc": cfg.mc_seed}, "config": cfg.as_dict()}
    if grid is not None:
        d["grid"] = grid.describe()
    d.update(extra)
    return d


def _opts(cfg: RunConfig) -> FitOptions:
    return FitOptions(max_iter=cfg.max_iter, grad_tol=cfg.grad_tol)


def cmd_test(cfg: RunConfig) -> int:
    s1, s2, _ = load_samples(cfg)
    grid = _grid(cfg, s1, s2)
    link = _link(cfg)
    point = _x_eval(cfg, s1, s2)
    f1 = fit_field(s1, grid, link, _opts(cfg))
    f2 = fit_field(s2, grid, link, _opts(cfg))
    c1, c2 = cdf_field(f1, point), cdf_field(f2, point)
    wq = load_or_simulate(cfg.cache_dir, cfg.epsilon, cfg.paths, cfg.steps, cfg.seed,
                          workers=cfg.workers)
    diag = {"groups": [str(s1.group_label), str(s2.group_label)],
            "n1": s1.n, "n2": s2.n, "link": link.describe(),
            "x_eval": point.x.tolist(),
            "cells": {"group1": f1.counts(), "group2": f2.counts()},
            "interpolated": c1.n_interpolated + c2.n_interpolated}
    rep = run_test(delta_field(c1, c2), cfg.delta, cfg.alpha, wq, diag)
    out = rep.to_dict()
    out["provenance"] = provenance(cfg, grid, w_samples={
        "epsilon": wq.epsilon, "n_paths": wq.n_paths, "n_steps": wq.n_steps, "seed": wq.seed})
    write_report(cfg.output, out, cfg.format)
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    s1, s2, _ = load_samples(cfg)
    grid = _grid(cfg, s1, s2)
    link = _link(cfg)
    rows = []
    p = s1.p
    for s in (s1, s2):
        f = fit_field(s, grid, link, _opts(cfg))
        for k, y in enumerate(grid.y_nodes):
            st = int(f.status[-1, k])
            rows.append([s.group_label, float(y), *f.values[-1, k].tolist(),
                         Status(st).name.lower()])
    header = ["group", "y", *(f"beta_{j + 1}" for j in range(p)), "status"]
    write_rows(cfg.output, header, rows)
    write_meta(cfg.output + ".meta.json", provenance(cfg, grid, link=link.describe()))
    return 0


def cmd_quantile(cfg: RunConfig) -> int:
    ws = simulate_w(cfg.epsilon, cfg.paths, cfg.steps, cfg.seed, workers=cfg.workers)
    write_cache(cfg.output, ws, [1 - cfg.alpha])
    write_meta(cfg.output + ".meta.json", provenance(cfg))
    print(f"q_{1 - cfg.alpha:g} = {quantile(ws, 1 - cfg.alpha)!r}")
    return 0


def cmd_mc(cfg: RunConfig) -> int:
    from .scenarios import ScenarioSpec, rejection_experiment

    spec = ScenarioSpec(cfg.scenario, cfg.n, cfg.sigma2)
    margin = spec.null_margin()
    grid_d2 = _floats(cfg.delta_sq_grid)
    if grid_d2 is None:
        grid_d2 = (margin * np.linspace(0.0, 2.0, 21)).tolist()
    wq = load_or_simulate(cfg.cache_dir, cfg.epsilon, cfg.paths, cfg.steps, cfg.seed,
                          workers=1)
    n_y, n_t = cfg.n_y or 61, cfg.n_t or 20
    rc = rejection_experiment(spec, grid_d2, cfg.reps, cfg.alpha, cfg.epsilon, wq,
                              cfg.mc_seed, n_t=n_t, n_y=n_y, workers=cfg.workers,
                              opts=_opts(cfg))
    header = ["delta_sq", "rate", "reps", "margin", "alpha", "epsilon", "n", "scenario"]
    write_rows(cfg.output, header, [[r[h] for h in header] for r in rc.rows()])
    root, _ = os.path.splitext(cfg.output)
    write_rows(root + "_pvalue.csv", ["delta_sq", "p_value"],
               zip(rc.delta_sq_grid, rc.pvalue_curve))
    write_meta(cfg.output + ".meta.json",
               provenance(cfg, n_t=n_t, n_y=n_y, dropped=rc.dropped,
                          failed_cells=rc.failed_cells, margin=margin))
    return 0


HANDLERS = {"test": cmd_test, "fit": cmd_fit, "quantile": cmd_quantile, "mc": cmd_mc}


def run(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


def _origin(exc: BaseException) -> str:
    for fr in reversed(traceback.extract_tb(exc.__traceback__)):
        parts = fr.filename.replace("\\", "/").split("/")
        if "drsn" in parts:
            return os.path.splitext(parts[-1])[0]
    return "cli"


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        return run(cfg)
    except SystemExit:
        raise
    except Exception as exc:  # report and exit nonzero
        print(f"drsn: error in {_origin(exc)}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
