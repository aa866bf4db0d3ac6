"""Hot inner loops: threshold-wise binary-regression fits and the Brownian
functional behind the pivotal limit.

Every kernel exists twice, as a numba-compiled loop (``*_nb``) and as a
vectorized numpy version (``*_np``). The module-level names without suffix
point at the numba version unless ``DRSN_DISABLE_NUMBA`` is set. Both
implementations follow the same cell order and the same numerical recipe, so
they agree up to floating-point summation order.
"""

import math

import numpy as np
from scipy import special

from ._accel import USE_NUMBA, njit
from .model import CLIP, LINK_LOGISTIC

CONVERGED, ALL_BELOW, ALL_ABOVE, FAILED = 0, 1, 2, 3
COND_MAX = 1e12

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=True, inline='always')
def _link_nb(a, kind, scale):
    u = a / scale
    if kind == LINK_LOGISTIC:
        if u >= 0.0:
            e = math.exp(-u)
            cdf = 1.0 / (1.0 + e)
            sf = e / (1.0 + e)
        else:
            e = math.exp(u)
            cdf = e / (1.0 + e)
            sf = 1.0 / (1.0 + e)
        pdf = cdf * sf / scale
        dpdf = pdf * (sf - cdf) / scale
    else:
        if u < 0.0:
            cdf = 0.5 * math.erfc(-u / _SQRT2)
            sf = 1.0 - cdf
        else:
            sf = 0.5 * math.erfc(u / _SQRT2)
            cdf = 1.0 - sf
        pdf = math.exp(-0.5 * u * u) / (_SQRT2PI * scale)
        dpdf = -u / scale * pdf
    return cdf, sf, pdf, dpdf


@njit(cache=True, fastmath=True)
def _evaluate_nb(X, z, k, beta, kind, scale, grad, nhess, fisher):
    """Log-likelihood of the first k rows; fills score, -Hessian, information."""
    p = X.shape[1]
    grad[:] = 0.0
    nhess[:, :] = 0.0
    fisher[:, :] = 0.0
    ll = 0.0
    for i in range(k):
        a = 0.0
        for m in range(p):
            a += X[i, m] * beta[m]
        cdf, sf, pdf, dpdf = _link_nb(a, kind, scale)
        c = min(max(cdf, CLIP), 1.0 - CLIP)
        s = min(max(sf, CLIP), 1.0 - CLIP)
        if z[i] > 0.5:
            ll += math.log(c)
            ga = pdf / c
            ha = dpdf / c - ga * ga
        else:
            ll += math.log(s)
            ga = -pdf / s
            ha = -dpdf / s - ga * ga
        w = pdf * pdf / (c * s)
        for m in range(p):
            xm = X[i, m]
            grad[m] += ga * xm
            for q in range(m + 1):
                xx = xm * X[i, q]
                nhess[m, q] -= ha * xx
                fisher[m, q] += w * xx
    for m in range(p):
        for q in range(m):
            nhess[q, m] = nhess[m, q]
            fisher[q, m] = fisher[m, q]
    return ll


@njit(cache=True)
def _chol_solve_nb(A, b, out, L):
    p = A.shape[0]
    for j in range(p):
        s = A[j, j]
        for m in range(j):
            s -= L[j, m] * L[j, m]
        if not s > 0.0:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, p):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            L[i, j] = s / L[j, j]
    for i in range(p):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * out[m]
        out[i] = s / L[i, i]
    for i in range(p - 1, -1, -1):
        s = out[i]
        for m in range(i + 1, p):
            s -= L[m, i] * out[m]
        out[i] = s / L[i, i]
    return True


@njit(cache=True)
def _well_conditioned_nb(A):
    ev = np.linalg.eigvalsh(A)
    return ev[0] > 0.0 and ev[-1] <= COND_MAX * ev[0]


@njit(cache=True)
def fit_one_nb(X, z, k, beta0, kind, scale, max_iter, tol, hmax, out):
    """Newton ascent with Fisher-scoring fallback and step halving.

    Writes the estimate into ``out``; returns ``(status, iterations)``.
    """
    p = X.shape[1]
    ones = 0.0
    for i in range(k):
        ones += z[i]
    if ones == 0.0:
        out[:] = 0.0
        return ALL_BELOW, 0
    if ones == k:
        out[:] = 0.0
        return ALL_ABOVE, 0
    beta = beta0.copy()
    trial = np.empty(p)
    d = np.empty(p)
    L = np.zeros((p, p))
    g = np.empty(p)
    H = np.empty((p, p))
    F = np.empty((p, p))
    g2 = np.empty(p)
    H2 = np.empty((p, p))
    F2 = np.empty((p, p))
    ll = _evaluate_nb(X, z, k, beta, kind, scale, g, H, F)
    it = 0
    while True:
        gmax = 0.0
        for m in range(p):
            gmax = max(gmax, abs(g[m]))
        if gmax <= tol and math.isfinite(ll):
            out[:] = beta
            if _well_conditioned_nb(F):
                return CONVERGED, it
            return FAILED, it
        if it >= max_iter:
            break
        it += 1
        accepted = False
        for attempt in range(2):
            if attempt == 0:
                ok = _chol_solve_nb(H, g, d, L)
            else:
                ok = _chol_solve_nb(F, g, d, L)
            if not ok:
                continue
            step = 1.0
            slack = 1e-12 * (1.0 + abs(ll))
            for h in range(hmax + 1):
                for m in range(p):
                    trial[m] = beta[m] + step * d[m]
                ll_new = _evaluate_nb(X, z, k, trial, kind, scale, g2, H2, F2)
                if math.isfinite(ll_new) and ll_new >= ll - slack:
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                break
        if not accepted:
            break
        beta[:] = trial
        ll = ll_new
        g[:] = g2
        H[:, :] = H2
        F[:, :] = F2
    out[:] = beta
    return FAILED, it


@njit(cache=True)
def _labels_nb(Y, y, z):
    for i in range(Y.size):
        z[i] = 1.0 if Y[i] <= y else 0.0


@njit(cache=True)
def fit_field_nb(X, Y, ys, ks, kind, scale, init, max_iter, tol, hmax):
    nt = ks.size
    ny = ys.size
    n, p = X.shape
    values = np.zeros((nt, ny, p))
    status = np.empty((nt, ny), np.int8)
    iters = np.zeros((nt, ny), np.int32)
    z = np.empty(n)
    last = nt - 1
    mid = (ny - 1) // 2
    # full-sample row, median outward
    for direction in (1, -1):
        if direction == 1:
            prev = init.copy()
            lo, hi = mid, ny
        else:
            if status[last, mid] == CONVERGED:
                prev = values[last, mid].copy()
            else:
                prev = init.copy()
            lo, hi = mid - 1, -1
        col = lo
        while col != hi:
            _labels_nb(Y, ys[col], z)
            st, it = fit_one_nb(X, z, ks[last], prev, kind, scale, max_iter,
                                tol, hmax, values[last, col])
            status[last, col] = st
            iters[last, col] = it
            if st == CONVERGED:
                prev = values[last, col].copy()
            col += direction
    # prefixes, t downward per outcome node
    for col in range(ny):
        _labels_nb(Y, ys[col], z)
        if status[last, col] == CONVERGED:
            prev = values[last, col].copy()
        else:
            prev = init.copy()
        for j in range(nt - 2, -1, -1):
            st, it = fit_one_nb(X, z, ks[j], prev, kind, scale, max_iter,
                                tol, hmax, values[j, col])
            status[j, col] = st
            iters[j, col] = it
            if st == CONVERGED:
                prev = values[j, col].copy()
    return values, status, iters


@njit(cache=True)
def w_from_increments_nb(xi, k0):
    """Pivotal ratio per row of Gaussian increments; also returns denominators."""
    m, N = xi.shape
    h = 1.0 / N
    sq = math.sqrt(h)
    w = np.empty(m)
    den = np.empty(m)
    for r in range(m):
        total = 0.0
        for i in range(N):
            total += xi[r, i]
        b1 = total * sq
        b = 0.0
        s = 0.0
        for kk in range(1, N + 1):
            b += xi[r, kk - 1]
            if kk >= k0:
                v = b * sq / (kk * h) - b1
                v *= v
                if kk == k0 or kk == N:
                    v *= 0.5
                s += v
        den[r] = math.sqrt(s * h)
        w[r] = b1 / den[r]
    return w, den


# ---------------------------------------------------------------------------
# numpy versions
# ---------------------------------------------------------------------------

def _link_np(a, kind, scale):
    u = a / scale
    if kind == LINK_LOGISTIC:
        cdf = special.expit(u)
        sf = special.expit(-u)
        pdf = cdf * sf / scale
        dpdf = pdf * (sf - cdf) / scale
    else:
        cdf = special.ndtr(u)
        sf = special.ndtr(-u)
        pdf = np.exp(-0.5 * u * u) / (_SQRT2PI * scale)
        dpdf = -u / scale * pdf
    return cdf, sf, pdf, dpdf


def _evaluate_np(X, z, beta, kind, scale):
    a = X @ beta
    cdf, sf, pdf, dpdf = _link_np(a, kind, scale)
    c = np.clip(cdf, CLIP, 1.0 - CLIP)
    s = np.clip(sf, CLIP, 1.0 - CLIP)
    pos = z > 0.5
    ll = np.sum(np.where(pos, np.log(c), np.log(s)))
    ga = np.where(pos, pdf / c, -pdf / s)
    ha = np.where(pos, dpdf / c, -dpdf / s) - ga * ga
    w = pdf * pdf / (c * s)
    g = X.T @ ga
    H = (X * -ha[:, None]).T @ X
    F = (X * w[:, None]).T @ X
    return ll, g, H, F


def _solve_pd(A, b):
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def _well_conditioned_np(A):
    ev = np.linalg.eigvalsh(A)
    return ev[0] > 0.0 and ev[-1] <= COND_MAX * ev[0]


def fit_one_np(X, z, k, beta0, kind, scale, max_iter, tol, hmax, out):
    ones = float(np.sum(z[:k]))
    if ones == 0.0:
        out[:] = 0.0
        return ALL_BELOW, 0
    if ones == k:
        out[:] = 0.0
        return ALL_ABOVE, 0
    Xk, zk = X[:k], z[:k]
    beta = np.array(beta0, dtype=np.float64)
    ll, g, H, F = _evaluate_np(Xk, zk, beta, kind, scale)
    it = 0
    while True:
        if np.max(np.abs(g)) <= tol and np.isfinite(ll):
            out[:] = beta
            return (CONVERGED if _well_conditioned_np(F) else FAILED), it
        if it >= max_iter:
            break
        it += 1
        accepted = None
        for A in (H, F):
            d = _solve_pd(A, g)
            if d is None:
                continue
            step = 1.0
            slack = 1e-12 * (1.0 + abs(ll))
            for _ in range(hmax + 1):
                trial = beta + step * d
                res = _evaluate_np(Xk, zk, trial, kind, scale)
                if np.isfinite(res[0]) and res[0] >= ll - slack:
                    accepted = trial, res
                    break
                step *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            break
        beta, (ll, g, H, F) = accepted
    out[:] = beta
    return FAILED, it


def fit_field_np(X, Y, ys, ks, kind, scale, init, max_iter, tol, hmax):
    nt, ny = ks.size, ys.size
    n, p = X.shape
    values = np.zeros((nt, ny, p))
    status = np.empty((nt, ny), np.int8)
    iters = np.zeros((nt, ny), np.int32)
    last = nt - 1
    mid = (ny - 1) // 2

    def sweep(cols, prev):
        for col in cols:
            z = (Y <= ys[col]).astype(np.float64)
            st, it = fit_one_np(X, z, ks[last], prev, kind, scale, max_iter,
                                tol, hmax, values[last, col])
            status[last, col] = st
            iters[last, col] = it
            if st == CONVERGED:
                prev = values[last, col].copy()

    sweep(range(mid, ny), init.copy())
    sweep(range(mid - 1, -1, -1),
          values[last, mid].copy() if status[last, mid] == CONVERGED else init.copy())
    for col in range(ny):
        z = (Y <= ys[col]).astype(np.float64)
        prev = values[last, col].copy() if status[last, col] == CONVERGED else init.copy()
        for j in range(nt - 2, -1, -1):
            st, it = fit_one_np(X, z, ks[j], prev, kind, scale, max_iter, tol,
                                hmax, values[j, col])
            status[j, col] = st
            iters[j, col] = it
            if st == CONVERGED:
                prev = values[j, col].copy()
    return values, status, iters


def w_from_increments_np(xi, k0):
    m, N = xi.shape
    h = 1.0 / N
    B = np.cumsum(xi, axis=1) * math.sqrt(h)
    t = np.arange(k0, N + 1) * h
    v = (B[:, k0 - 1:] / t - B[:, -1:]) ** 2
    s = v.sum(axis=1) - 0.5 * (v[:, 0] + v[:, -1])
    den = np.sqrt(s * h)
    return B[:, -1] / den, den


if USE_NUMBA:
    fit_one, fit_field_kernel, w_from_increments = fit_one_nb, fit_field_nb, w_from_increments_nb
else:
    fit_one, fit_field_kernel, w_from_increments = fit_one_np, fit_field_np, w_from_increments_np
