"""CSV ingestion and report serialization.

Floats are written with ``repr`` (shortest round-trip form), so anything
written here reads back bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import Sample


@dataclass(frozen=True)
class ColumnMap:
    outcome: str = "y"
    covariates: tuple | None = None  # None: every non-outcome, non-group column
    group: str = "group"


def _num(s: str, row: int, col: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"row {row}, column {col!r}: cannot parse {s!r} as a number") from None
    if not math.isfinite(v):
        raise ValueError(f"row {row}, column {col!r}: non-finite value {s!r}")
    return v


def _read_table(path, mapping: ColumnMap, need_group: bool):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = [h.strip() for h in next(rd)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row missing") from None
        has_group = mapping.group in header
        if need_group and not has_group:
            raise ValueError(f"{path}: missing group column {mapping.group!r}")
        if mapping.outcome not in header:
            raise ValueError(f"{path}: missing outcome column {mapping.outcome!r}")
        if mapping.covariates is None:
            covs = [h for h in header if h not in (mapping.outcome, mapping.group)]
        else:
            covs = list(mapping.covariates)
            for c in covs:
                if c not in header:
                    raise ValueError(f"{path}: missing covariate column {c!r}")
        iy = header.index(mapping.outcome)
        ic = [header.index(c) for c in covs]
        ig = header.index(mapping.group) if has_group else None
        ys, xs, gs = [], [], []
        for r, line in enumerate(rd, start=2):
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != len(header):
                raise ValueError(f"{path}: row {r} has {len(line)} cells, header has {len(header)}")
            ys.append(_num(line[iy], r, mapping.outcome))
            xs.append([_num(line[i], r, c) for i, c in zip(ic, covs)])
            gs.append(line[ig].strip() if ig is not None else None)
    if not ys:
        raise ValueError(f"{path}: no data rows")
    return np.array(ys), np.array(xs, dtype=np.float64).reshape(len(ys), len(covs)), gs, covs


def ingest_csv(path, mapping: ColumnMap = ColumnMap(), intercept: bool = True):
    """Read ``y,<covariates>,group`` and split the rows into two samples.

    Groups are ordered by first appearance; within a group the file order is
    kept, which fixes the prefixes used by the sequential fits.
    """
    y, X, g, covs = _read_table(path, mapping, need_group=True)
    labels = list(dict.fromkeys(g))
    if len(labels) > 2:
        raise ValueError(f"{path}: group column has a third label {labels[2]!r}; exactly two are required")
    if len(labels) < 2:
        raise ValueError(f"{path}: group column has only the label {labels[0]!r}; exactly two are required")
    g = np.array(g, dtype=object)
    out = tuple(Sample.from_covariates(y[g == lab], X[g == lab], lab, intercept)
                for lab in labels)
    return out[0], out[1], covs


def ingest_single(path, mapping: ColumnMap = ColumnMap(), intercept: bool = True,
                  label=None) -> tuple[Sample, list]:
    """One file, one group; a group column, if present, must be constant."""
    y, X, g, covs = _read_table(path, mapping, need_group=False)
    seen = set(g) - {None}
    if len(seen) > 1:
        raise ValueError(f"{path}: single-group file has labels {sorted(seen)}")
    lab = label if label is not None else (seen.pop() if seen else str(path))
    return Sample.from_covariates(y, X, lab, intercept), covs


def emit_csv(path, samples, covariate_names, intercept: bool = True) -> None:
    """Write samples as ``y,<covariates>,group`` (the intercept column is dropped)."""
    covariate_names = list(covariate_names)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["y", *covariate_names, "group"])
        for s in samples:
            X = s.design[:, 1:] if intercept else s.design
            if X.shape[1] != len(covariate_names):
                raise ValueError("covariate names do not match the design width")
            for yi, row in zip(s.outcomes, X):
                wr.writerow([repr(float(yi)), *(repr(float(v)) for v in row), s.group_label])


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def config_hash(cfg: dict) -> str:
    blob = json.dumps(_plain(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(_plain(v), sort_keys=True)
    return str(v)


def write_report(path, report: dict, fmt: str) -> None:
    """TestReport-shaped dict as JSON, or as a one-row CSV with the same keys."""
    report = _plain(report)
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=False)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(list(report))
            wr.writerow([_cell(v) for v in report.values()])
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report(path, fmt: str) -> dict:
    if fmt == "json":
        with open(path) as fh:
            return json.load(fh)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    out = {}
    for k, v in zip(rows[0], rows[1]):
        if v in ("true", "false"):
            out[k] = v == "true"
        elif v and v[0] in "[{":
            out[k] = json.loads(v)
        else:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([_cell(v) for v in r])


def write_meta(path, meta: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(meta), fh, indent=2)
        fh.write("\n")
