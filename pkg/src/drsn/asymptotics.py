"""Plug-in estimates of the limiting covariance objects.

These are diagnostics; the test itself never uses them. ``form`` selects the
kernel convention:

* ``"sandwich"`` (default): covariance of the estimated CDF difference,
  lambda(y1) lambda(y2) x' J(y1)^-1 C(y1, y2) J(y2)^-1 x per group, where
  C is the score covariance and J = C(y, y) the information.
* ``"score"``: lambda(y1) lambda(y2) x' C(y1, y2) x, without the
  information inverses.
* ``"literal"``: the uncorrected kernel (unsymmetrized weights), kept for
  comparison only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mle import FitOptions, fit_rows
from .model import CLIP, CoefficientField, LinkSpec, Sample, Status, make_grid

FORMS = ("sandwich", "score", "literal")


@dataclass(frozen=True)
class KernelEstimate:
    y_nodes: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    H: np.ndarray
    c_hat: float
    tau2: float
    tau2_clamped: bool = False


def field_beta_at(field: CoefficientField):
    """Map an outcome node to its converged full-sample estimate."""
    nodes = field.grid.y_nodes

    def beta_at(y):
        k = int(np.argmin(np.abs(nodes - y)))
        if nodes[k] != y:
            raise ValueError(f"{y} is not an outcome node of the fitted grid")
        if field.status[-1, k] != Status.CONVERGED:
            raise ValueError(f"fit at y={y} is {Status(int(field.status[-1, k])).name.lower()}")
        return field.values[-1, k]

    return beta_at


def _parts(link: LinkSpec, a):
    F = np.clip(link.cdf(a), CLIP, 1 - CLIP)
    return F, link.pdf(a)


def estimate_C(sample: Sample, beta_at, link: LinkSpec, y1: float, y2: float,
               form: str = "score") -> np.ndarray:
    """Score covariance between thresholds y1 and y2 (``form="literal"`` for
    the literal display)."""
    if y1 > y2:
        # canonical order makes C(y1, y2) and C(y2, y1) bitwise equal
        y1, y2 = y2, y1
    X = sample.design
    a1 = X @ np.asarray(beta_at(y1))
    a2 = X @ np.asarray(beta_at(y2))
    amin = a1 if y1 <= y2 else a2
    F1, f1 = _parts(link, a1)
    F2, f2 = _parts(link, a2)
    Fm, _ = _parts(link, amin)
    if form == "literal":
        w = f1 * f2 * F1 * F2 / ((1 - F1) * (1 - F2)) * (Fm - F1 * F2)
    else:
        w = f1 * f2 * (Fm - F1 * F2) / (F1 * (1 - F1) * F2 * (1 - F2))
    C = (X * w[:, None]).T @ X / sample.n
    return 0.5 * (C + C.T)


def information(sample: Sample, beta, link: LinkSpec) -> np.ndarray:
    X = sample.design
    F, f = _parts(link, X @ np.asarray(beta))
    w = f * f / (F * (1 - F))
    J = (X * w[:, None]).T @ X / sample.n
    return 0.5 * (J + J.T)


def estimate_H(x, beta1_at, beta2_at, link: LinkSpec, c_hat: float,
               y1: float, y2: float, sample1: Sample, sample2: Sample,
               form: str = "sandwich") -> float:
    if not 0 < c_hat < 1:
        raise ValueError("c_hat must lie in (0, 1)")
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    x = np.asarray(getattr(x, "x", x), dtype=np.float64)
    if y1 > y2 and form != "literal":
        y1, y2 = y2, y1
    total = 0.0
    for sample, beta_at, wgt, grp in ((sample1, beta1_at, 1 / c_hat, 1),
                                      (sample2, beta2_at, 1 / (1 - c_hat), 2)):
        b1, b2 = np.asarray(beta_at(y1)), np.asarray(beta_at(y2))
        l1, l2 = link.pdf(x @ b1), link.pdf(x @ b2)
        if form == "literal":
            C = estimate_C(sample, beta_at, link, y1, y2, form="literal")
            lam2 = l1 * l1 if grp == 1 else l2 * l2
            total += wgt * lam2 * (x @ C @ x)
            continue
        C = estimate_C(sample, beta_at, link, y1, y2)
        if form == "sandwich":
            u1 = np.linalg.solve(information(sample, b1, link), x)
            u2 = np.linalg.solve(information(sample, b2, link), x)
            total += wgt * l1 * l2 * (u1 @ C @ u2)
        else:
            total += wgt * l1 * l2 * (x @ C @ x)
    return float(total)


def estimate_tau2(delta_at, H_at, grid) -> tuple[float, bool]:
    """4 * double integral of Delta(y1) Delta(y2) H(y1, y2); clamped at 0.

    ``delta_at`` and ``H_at`` may be callables or precomputed arrays on the
    grid nodes. Returns ``(tau2, clamped)``.
    """
    y = grid.y_nodes
    d = np.asarray(delta_at(y) if callable(delta_at) else delta_at, dtype=np.float64)
    if callable(H_at):
        H = np.array([[H_at(a, b) for b in y] for a in y])
    else:
        H = np.asarray(H_at, dtype=np.float64)
    wd = grid.y_weights * d
    tau2 = 4.0 * float(wd @ H @ wd)
    if tau2 < 0:
        return 0.0, True
    return tau2, False


def _group_kernel(X, B, ok, link, x, form, with_C):
    """Per-group C stack (optional) and H contribution over all node pairs."""
    n, p = X.shape
    ny = B.shape[0]
    good = np.flatnonzero(ok)
    A = X @ B.T
    F = np.clip(link.cdf(A), CLIP, 1 - CLIP)
    f = link.pdf(A)
    S = f * F / (1 - F) if form == "literal" else f / (F * (1 - F))
    S[:, ~ok] = 0.0
    lam = link.pdf(B @ x)
    if form == "sandwich":
        U = np.zeros((ny, p))
        for k in good:
            J = (X * (f[:, k] ** 2 / (F[:, k] * (1 - F[:, k])))[:, None]).T @ X / n
            U[k] = np.linalg.solve(J, x)
        M = X @ U.T
    else:
        M = np.repeat((X @ x)[:, None], ny, axis=1)
    # sum_i P1 P2 (F_min - F1 F2), split by which threshold is smaller
    P = S * M
    Q = P * F
    Hg = (np.triu(Q.T @ P) + np.tril(P.T @ Q, -1) - Q.T @ Q) / n
    C = None
    if with_C:
        C = np.zeros((ny, ny, p, p))
        for k1 in good:
            G = F[:, np.minimum(k1, good)] - F[:, [k1]] * F[:, good]
            W = S[:, [k1]] * S[:, good] * G
            c = np.einsum("ik,ip,iq->kpq", W, X, X, optimize=True) / n
            C[k1, good] = 0.5 * (c + c.transpose(0, 2, 1))
    if form == "literal":
        return C, Hg, lam
    return C, Hg * np.outer(lam, lam), lam


def estimate_kernels(sample1: Sample, sample2: Sample, beta1, beta2, ok1, ok2,
                     link: LinkSpec, x, grid, delta, form: str = "sandwich",
                     with_C: bool = True) -> KernelEstimate:
    """All node-pair kernels plus tau^2 from full-sample fits on ``grid``.

    Pairs touching a non-converged node get zero kernel weight.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    x = np.asarray(getattr(x, "x", x), dtype=np.float64)
    c_hat = sample1.n / (sample1.n + sample2.n)
    C1, H1, lam1 = _group_kernel(sample1.design, beta1, ok1, link, x, form, with_C)
    C2, H2, lam2 = _group_kernel(sample2.design, beta2, ok2, link, x, form, with_C)
    if form == "literal":
        H = H1 * (lam1 ** 2)[:, None] / c_hat + H2 * (lam2 ** 2)[None, :] / (1 - c_hat)
    else:
        H = H1 / c_hat + H2 / (1 - c_hat)
        H = 0.5 * (H + H.T)
    tau2, clamped = estimate_tau2(delta, H, grid)
    return KernelEstimate(grid.y_nodes, C1, C2, H, c_hat, tau2, clamped)


def clt_replications(spec, reps: int, seed: int, n_y: int = 61,
                     opts: FitOptions = FitOptions(), form: str = "sandwich"):
    """Full-sample fits on ``reps`` scenario draws.

    Returns per-replication Delta(1, y | x) on the grid, T, H(y, y) and tau^2
    so that plug-in kernels can be compared with Monte Carlo spreads.
    """
    from .scenarios import generate

    grid = make_grid((*spec.outcome_interval, n_y), 0.5, 2)
    x = spec.x_eval.x
    intercept2 = spec.group2_intercept()
    root = np.random.SeedSequence(seed)
    D = np.empty((reps, n_y))
    Hdiag = np.empty((reps, n_y))
    tau2 = np.empty(reps)
    for r in range(reps):
        g1, g2 = generate(spec, np.random.SeedSequence(root.entropy, spawn_key=(r,)), intercept2)
        b1, s1 = fit_rows(g1, grid.y_nodes, spec.fit_link, opts)
        b2, s2 = fit_rows(g2, grid.y_nodes, spec.fit_link, opts)
        F1 = np.where(s1 == Status.ALL_ABOVE, 1.0, np.where(s1 == Status.ALL_BELOW, 0.0,
                                                            spec.fit_link.cdf(b1 @ x)))
        F2 = np.where(s2 == Status.ALL_ABOVE, 1.0, np.where(s2 == Status.ALL_BELOW, 0.0,
                                                            spec.fit_link.cdf(b2 @ x)))
        D[r] = F1 - F2
        ke = estimate_kernels(g1, g2, b1, b2, s1 == Status.CONVERGED, s2 == Status.CONVERGED,
                              spec.fit_link, x, grid, D[r], form, with_C=False)
        Hdiag[r] = np.diag(ke.H)
        tau2[r] = ke.tau2
    T = (D ** 2) @ grid.y_weights
    return grid, D, T, Hdiag, tau2
