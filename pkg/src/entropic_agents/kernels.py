"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba (``*_nb``) and a
vectorized numpy version (``*_np``). The public name is bound to one of them
according to :data:`entropic_agents._accel.USE_NUMBA`. Both are kept importable
so the benchmark and the cross-check tests can call either path.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

_BISECT_ITERS = 200
_TINY = 1e-300  # floor for underflowed tilt weights


# ---------------------------------------------------------------------------
# entropy drift  H(l) = l * (I(l) - log l),  I(l) = sum_k w_k l_k log l_k
# ---------------------------------------------------------------------------


@njit
def entropy_drift_nb(L, w):
    n, m = L.shape
    I = np.empty(n)
    H = np.empty((n, m))
    for i in range(n):
        s = 0.0
        for k in range(m):
            v = L[i, k]
            if v > 0.0:
                s += w[k] * v * math.log(v)
        I[i] = s
        for k in range(m):
            v = L[i, k]
            H[i, k] = v * (s - math.log(v))
    return I, H


def entropy_drift_np(L, w):
    logL = np.log(L)
    I = (w * L * logL).sum(axis=1)
    return I, L * (I[:, None] - logL)


# ---------------------------------------------------------------------------
# clipped exponential tilt:  l_k = clip(c z_k, r, R)  with  sum_k w_k l_k = 1
# ---------------------------------------------------------------------------


@njit
def tilt_project_nb(Z, w, r, R):
    n, m = Z.shape
    out = np.empty((n, m))
    for i in range(n):
        zmin = Z[i, 0]
        zmax = Z[i, 0]
        for k in range(1, m):
            zmin = min(zmin, Z[i, k])
            zmax = max(zmax, Z[i, k])
        lo = math.log(r / zmax)
        hi = math.log(R / max(zmin, _TINY))
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            c = math.exp(mid)
            mass = 0.0
            for k in range(m):
                mass += w[k] * min(R, max(r, c * Z[i, k]))
            if mass < 1.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15:
                break
        c = math.exp(0.5 * (lo + hi))
        # exact finish on the free set
        fixed = 0.0
        free = 0.0
        for k in range(m):
            v = c * Z[i, k]
            if v <= r:
                fixed += w[k] * r
            elif v >= R:
                fixed += w[k] * R
            else:
                free += w[k] * Z[i, k]
        cf = c
        if free > 0.0:
            c2 = (1.0 - fixed) / free
            ok = True
            for k in range(m):
                v = c * Z[i, k]
                if r < v < R:
                    v2 = c2 * Z[i, k]
                    if v2 < r or v2 > R:
                        ok = False
            if ok:
                cf = c2
        for k in range(m):
            v = c * Z[i, k]
            if v <= r:
                out[i, k] = r
            elif v >= R:
                out[i, k] = R
            else:
                out[i, k] = min(R, max(r, cf * Z[i, k]))
    return out


def tilt_project_np(Z, w, r, R):
    Z = np.asarray(Z, dtype=float)
    lo = np.log(r / Z.max(axis=1))
    hi = np.log(R / np.maximum(Z.min(axis=1), _TINY))
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        mass = (w * np.clip(np.exp(mid)[:, None] * Z, r, R)).sum(axis=1)
        below = mass < 1.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < 1e-15):
            break
    c = np.exp(0.5 * (lo + hi))[:, None]
    V = c * Z
    low = V <= r
    high = V >= R
    free_mask = ~(low | high)
    fixed = (w * np.where(low, r, 0.0)).sum(axis=1) + (w * np.where(high, R, 0.0)).sum(axis=1)
    free = (w * np.where(free_mask, Z, 0.0)).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c2 = ((1.0 - fixed) / free)[:, None]
    V2 = c2 * Z
    ok = (free > 0.0) & ~np.any(free_mask & ((V2 < r) | (V2 > R)), axis=1)
    c = np.where(ok[:, None], c2, c)
    V = c * Z
    return np.where(free_mask, np.clip(V, r, R), np.where(low, r, R))


# ---------------------------------------------------------------------------
# state cost matrix  C_ij = |x_i - x'_j| + ||l_i - l'_j||_{L^p(w)}
# ---------------------------------------------------------------------------


@njit
def cost_matrix_nb(X1, L1, X2, L2, w, p):
    n1, d = X1.shape
    n2 = X2.shape[0]
    m = L1.shape[1]
    C = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            s = 0.0
            for a in range(d):
                t = X1[i, a] - X2[j, a]
                s += t * t
            dist = math.sqrt(s)
            if m > 0:
                if p == np.inf:
                    mx = 0.0
                    for k in range(m):
                        mx = max(mx, abs(L1[i, k] - L2[j, k]))
                    dist += mx
                elif p == 2.0:
                    acc = 0.0
                    for k in range(m):
                        t = L1[i, k] - L2[j, k]
                        acc += w[k] * t * t
                    dist += math.sqrt(acc)
                else:
                    acc = 0.0
                    for k in range(m):
                        acc += w[k] * abs(L1[i, k] - L2[j, k]) ** p
                    dist += acc ** (1.0 / p)
            C[i, j] = dist
    return C


def cost_matrix_np(X1, L1, X2, L2, w, p):
    C = np.sqrt(((X1[:, None, :] - X2[None, :, :]) ** 2).sum(axis=2))
    if L1.shape[1] > 0:
        D = np.abs(L1[:, None, :] - L2[None, :, :])
        if p == np.inf:
            C = C + D.max(axis=2)
        else:
            C = C + ((w * D**p).sum(axis=2)) ** (1.0 / p)
    return C


# ---------------------------------------------------------------------------
# spatial interaction kernels
# ---------------------------------------------------------------------------


@njit
def gaussian_gram_nb(Xq, Xs, width):
    n, d = Xq.shape
    m = Xs.shape[0]
    K = np.empty((n, m))
    c = 0.5 / (width * width)
    for i in range(n):
        for j in range(m):
            s = 0.0
            for a in range(d):
                t = Xq[i, a] - Xs[j, a]
                s += t * t
            K[i, j] = math.exp(-c * s)
    return K


def gaussian_gram_np(Xq, Xs, width):
    sq = ((Xq[:, None, :] - Xs[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-sq / (2.0 * width * width))


@njit
def alignment_drift_nb(Xq, Xs, width):
    """D_i = mean_j (x_j - x_i) exp(-|x_j - x_i|^2 / 2 w^2)."""
    n, d = Xq.shape
    m = Xs.shape[0]
    D = np.zeros((n, d))
    c = 0.5 / (width * width)
    for i in range(n):
        for j in range(m):
            s = 0.0
            for a in range(d):
                t = Xs[j, a] - Xq[i, a]
                s += t * t
            g = math.exp(-c * s)
            for a in range(d):
                D[i, a] += (Xs[j, a] - Xq[i, a]) * g
        for a in range(d):
            D[i, a] /= m
    return D


def alignment_drift_np(Xq, Xs, width):
    diff = Xs[None, :, :] - Xq[:, None, :]
    g = np.exp(-(diff**2).sum(axis=2) / (2.0 * width * width))
    return (diff * g[:, :, None]).mean(axis=1)


# ---------------------------------------------------------------------------
# exact linear assignment (shortest augmenting path with potentials, O(n^3))
# ---------------------------------------------------------------------------


@njit
def hungarian_nb(C):
    n = C.shape[0]
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.empty(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INF
            used[j] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    sigma = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        sigma[p[j] - 1] = j - 1
    return sigma


def hungarian_np(C):
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    Cp = np.zeros((n + 1, n + 1))
    Cp[1:, 1:] = C
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = Cp[i0] - u[i0] - v
            upd = free & (cur < minv)
            minv[upd] = cur[upd]
            way[upd] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    sigma = np.empty(n, dtype=np.int64)
    sigma[p[1:] - 1] = np.arange(n)
    return sigma


if USE_NUMBA:
    entropy_drift = entropy_drift_nb
    tilt_project = tilt_project_nb
    cost_matrix = cost_matrix_nb
    gaussian_gram = gaussian_gram_nb
    alignment_drift = alignment_drift_nb
    hungarian = hungarian_nb
else:
    entropy_drift = entropy_drift_np
    tilt_project = tilt_project_np
    cost_matrix = cost_matrix_np
    gaussian_gram = gaussian_gram_np
    alignment_drift = alignment_drift_np
    hungarian = hungarian_np

KERNELS = {
    "entropy_drift": (entropy_drift_nb, entropy_drift_np),
    "tilt_project": (tilt_project_nb, tilt_project_np),
    "cost_matrix": (cost_matrix_nb, cost_matrix_np),
    "gaussian_gram": (gaussian_gram_nb, gaussian_gram_np),
    "alignment_drift": (alignment_drift_nb, alignment_drift_np),
    "hungarian": (hungarian_nb, hungarian_np),
}
