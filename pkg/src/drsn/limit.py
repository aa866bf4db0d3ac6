"""Monte Carlo law of the pivotal limit

    W = B(1) / sqrt( int_eps^1 (B(t)/t - B(1))^2 dt )

for a standard Brownian motion B, with quantile lookup and a CSV cache.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels

CACHE_HEADER = ["epsilon", "n_paths", "n_steps", "seed", "level", "quantile"]
BLOCK = 256


@dataclass(frozen=True)
class WSampleSet:
    epsilon: float
    n_paths: int
    n_steps: int
    seed: int
    samples: np.ndarray
    denominators: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("samples must be a non-empty vector")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples contain non-finite values")
        if np.any(np.diff(s) < 0):
            s = np.sort(s)
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)


def first_node(epsilon: float, n_steps: int) -> int:
    """Index of the first grid node k/n_steps that is >= epsilon."""
    return max(1, math.ceil(epsilon * n_steps - 1e-9))


def path_increments(seed: int, first_path: int, n_paths: int, n_steps: int,
                    out: np.ndarray | None = None) -> np.ndarray:
    """Standard normal increments, one independent stream per path index."""
    if out is None:
        out = np.empty((n_paths, n_steps))
    for r in range(n_paths):
        ss = np.random.SeedSequence(seed, spawn_key=(first_path + r,))
        np.random.Generator(np.random.PCG64(ss)).standard_normal(n_steps, out=out[r])
    return out


def simulate_w(epsilon: float = 0.1, n_paths: int = 200_000,
               n_steps: int = 10_000, seed: int = 20240101,
               workers: int = 1, check: bool = True) -> WSampleSet:
    """Simulate ``n_paths`` realizations of W on a uniform grid.

    Paths are generated in fixed blocks, so the result depends only on
    (seed, n_paths, n_steps), never on ``workers``.
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if check and (n_steps < 1000 or n_paths < 1000):
        raise ValueError("need n_steps >= 1000 and n_paths >= 1000")
    k0 = first_node(epsilon, n_steps)
    w = np.empty(n_paths)
    den = np.empty(n_paths)
    starts = list(range(0, n_paths, BLOCK))

    def block(start):
        m = min(BLOCK, n_paths - start)
        xi = path_increments(seed, start, m, n_steps)
        w[start:start + m], den[start:start + m] = kernels.w_from_increments(xi, k0)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(block, starts))
    else:
        for s in starts:
            block(s)
    if np.any(den <= 0):
        raise RuntimeError(f"{int(np.sum(den <= 0))} zero denominators")
    return WSampleSet(float(epsilon), int(n_paths), int(n_steps), int(seed),
                      np.sort(w), den)


def simulate_w_refined(epsilon: float, n_paths: int, n_steps: int, refine: int,
                       seed: int) -> tuple[WSampleSet, WSampleSet]:
    """W on ``n_steps`` and on ``refine * n_steps`` nodes from the same paths.

    The coarse increments are block sums of the fine ones, so the two sample
    sets differ by discretization only.
    """
    if refine < 2:
        raise ValueError("refine must be >= 2")
    fine_n = refine * n_steps
    k_c, k_f = first_node(epsilon, n_steps), first_node(epsilon, fine_n)
    wc, wf = np.empty(n_paths), np.empty(n_paths)
    for start in range(0, n_paths, BLOCK):
        m = min(BLOCK, n_paths - start)
        xi = path_increments(seed, start, m, fine_n)
        coarse = xi.reshape(m, n_steps, refine).sum(axis=2) / math.sqrt(refine)
        wc[start:start + m] = kernels.w_from_increments(coarse, k_c)[0]
        wf[start:start + m] = kernels.w_from_increments(xi, k_f)[0]
    return (WSampleSet(epsilon, n_paths, n_steps, seed, wc),
            WSampleSet(epsilon, n_paths, fine_n, seed, wf))


def quantile(ws: WSampleSet, level: float) -> float:
    """Type-1 empirical quantile: order statistic number ceil(level * n)."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    n = ws.samples.size
    j = max(1, math.ceil(level * n - 1e-9))
    return float(ws.samples[j - 1])


def write_cache(path, ws: WSampleSet, levels) -> None:
    """Append one row per level to the quantile cache CSV."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        wr = csv.writer(fh)
        if new:
            wr.writerow(CACHE_HEADER)
        for lv in levels:
            wr.writerow([repr(ws.epsilon), ws.n_paths, ws.n_steps, ws.seed,
                         repr(float(lv)), repr(quantile(ws, lv))])


def read_cache(path) -> list[dict]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != CACHE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CACHE_HEADER)}")
        return [{"epsilon": float(r["epsilon"]), "n_paths": int(r["n_paths"]),
                 "n_steps": int(r["n_steps"]), "seed": int(r["seed"]),
                 "level": float(r["level"]), "quantile": float(r["quantile"])}
                for r in rd]


def lookup_cache(path, epsilon, n_paths, n_steps, seed, level) -> float | None:
    if not os.path.exists(path):
        return None
    for r in read_cache(path):
        if (r["epsilon"] == epsilon and r["n_paths"] == n_paths
                and r["n_steps"] == n_steps and r["seed"] == seed
                and r["level"] == level):
            return r["quantile"]
    return None


def samples_path(cache_dir, epsilon, n_paths, n_steps, seed) -> str:
    return os.path.join(cache_dir, f"w_eps{epsilon!r}_p{n_paths}_s{n_steps}_seed{seed}.npy")


def load_or_simulate(cache_dir, epsilon, n_paths, n_steps, seed,
                     workers: int = 1) -> WSampleSet:
    """Reuse stored samples from ``cache_dir`` when present."""
    if cache_dir:
        fn = samples_path(cache_dir, epsilon, n_paths, n_steps, seed)
        if os.path.exists(fn):
            return WSampleSet(epsilon, n_paths, n_steps, seed, np.load(fn))
    ws = simulate_w(epsilon, n_paths, n_steps, seed, workers=workers)
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        np.save(fn, ws.samples)
    return ws
