"""Loop-shaped inner kernels.

Each kernel has an explicit-loop body compiled with numba when available and
a vectorised numpy twin. The public name resolves to the numba version unless
numba is missing or disabled through ``HESSAPPROX_DISABLE_NUMBA``; both are
exported (``*_numba`` / ``*_numpy``) for testing and benchmarking.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit


# --------------------------------------------------------------------------
# Geyer initial positive sequence


def _geyer_tau_loop(rho):
    n = rho.shape[0]
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 1
    return tau


def geyer_tau_numpy(rho: np.ndarray) -> float:
    """Integrated autocorrelation time ``1 + 2 sum rho_k`` truncated by Geyer's rule.

    ``rho[0]`` must be 1. Pairs ``rho[2m] + rho[2m+1]`` are summed up to (not
    including) the first non-positive pair.
    """
    rho = np.asarray(rho, dtype=np.float64)
    npairs = rho.shape[0] // 2
    pairs = rho[0:2 * npairs:2] + rho[1:2 * npairs:2]
    bad = np.flatnonzero(pairs <= 0.0)
    stop = bad[0] if bad.size else npairs
    return float(-1.0 + 2.0 * pairs[:stop].sum())


# --------------------------------------------------------------------------
# recentred window extraction (PSF cut-out)


def _recentered_windows_loop(field, cz, cx, radius):
    nz, nx = field.shape
    k = cz.shape[0]
    out = np.zeros((k, nz, nx))
    for p in range(k):
        for oz in range(-radius, radius + 1):
            sz = (cz[p] + oz) % nz
            tz = oz % nz
            for ox in range(-radius, radius + 1):
                sx = (cx[p] + ox) % nx
                tx = ox % nx
                out[p, tz, tx] = field[sz, sx]
    return out


def recentered_windows_numpy(field, cz, cx, radius):
    """Copy the ``(2r+1)^2`` window around each centre into a zero field at the origin.

    Output ``[k]`` holds ``field[cz_k + oz, cx_k + ox]`` at index ``(oz, ox)``
    (periodic), for ``|oz|, |ox| <= radius``, and zero elsewhere.
    """
    field = np.asarray(field, dtype=np.float64)
    nz, nx = field.shape
    cz = np.asarray(cz, dtype=np.int64)
    cx = np.asarray(cx, dtype=np.int64)
    off = np.arange(-radius, radius + 1)
    out = np.zeros((cz.shape[0], nz, nx))
    src_z = (cz[:, None] + off[None, :]) % nz
    src_x = (cx[:, None] + off[None, :]) % nx
    tz = off % nz
    tx = off % nx
    vals = field[src_z[:, :, None], src_x[:, None, :]]
    out[:, tz[:, None], tx[None, :]] = vals
    return out


# --------------------------------------------------------------------------
# 1D hat (piecewise linear) interpolation weights


def _hat_weights_loop(nodes, coords):
    m = nodes.shape[0]
    n = coords.shape[0]
    w = np.zeros((m, n))
    for j in range(n):
        c = coords[j]
        if m == 1 or c <= nodes[0]:
            w[0, j] = 1.0
            continue
        if c >= nodes[m - 1]:
            w[m - 1, j] = 1.0
            continue
        lo = 0
        hi = m - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if nodes[mid] <= c:
                lo = mid
            else:
                hi = mid
        t = (c - nodes[lo]) / (nodes[hi] - nodes[lo])
        w[lo, j] = 1.0 - t
        w[hi, j] = t
    return w


def hat_weights_numpy(nodes, coords):
    """Piecewise-linear weights of sorted ``nodes`` at ``coords``, clamped outside.

    Returns ``(len(nodes), len(coords))``; columns sum to one.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    m = nodes.shape[0]
    w = np.zeros((m, coords.shape[0]))
    if m == 1:
        w[0] = 1.0
        return w
    c = np.clip(coords, nodes[0], nodes[-1])
    hi = np.clip(np.searchsorted(nodes, c, side="right"), 1, m - 1)
    lo = hi - 1
    t = (c - nodes[lo]) / (nodes[hi] - nodes[lo])
    cols = np.arange(coords.shape[0])
    w[lo, cols] = 1.0 - t
    np.add.at(w, (hi, cols), t)
    return w


# --------------------------------------------------------------------------
# L-BFGS two-loop recursion halves
#
# rho[i] = 1 / (s_i . y_i) with plain dot products; a constant cell-area
# weight cancels in every ratio, so weighted and unweighted forms agree.


def _lbfgs_first_loop(S, Y, rho, q):
    m = S.shape[0]
    alpha = np.zeros(m)
    q = q.copy()
    for i in range(m - 1, -1, -1):
        a = rho[i] * np.dot(S[i], q)
        alpha[i] = a
        q -= a * Y[i]
    return q, alpha


def _lbfgs_second_loop(S, Y, rho, alpha, r):
    m = S.shape[0]
    r = r.copy()
    for i in range(m):
        b = rho[i] * np.dot(Y[i], r)
        r += (alpha[i] - b) * S[i]
    return r


def lbfgs_first_loop_numpy(S, Y, rho, q):
    """Backward pass: returns ``(q, alpha)`` for pairs stored oldest-first in ``S, Y``."""
    q = np.array(q, dtype=np.float64)
    alpha = np.zeros(S.shape[0])
    for i in range(S.shape[0] - 1, -1, -1):
        alpha[i] = rho[i] * (S[i] @ q)
        q -= alpha[i] * Y[i]
    return q, alpha


def lbfgs_second_loop_numpy(S, Y, rho, alpha, r):
    r = np.array(r, dtype=np.float64)
    for i in range(S.shape[0]):
        r += (alpha[i] - rho[i] * (Y[i] @ r)) * S[i]
    return r


if HAVE_NUMBA:
    geyer_tau_numba = njit(cache=True)(_geyer_tau_loop)
    recentered_windows_numba = njit(cache=True)(_recentered_windows_loop)
    hat_weights_numba = njit(cache=True)(_hat_weights_loop)
    lbfgs_first_loop_numba = njit(cache=True)(_lbfgs_first_loop)
    lbfgs_second_loop_numba = njit(cache=True)(_lbfgs_second_loop)

    def geyer_tau(rho):
        return float(geyer_tau_numba(np.ascontiguousarray(rho, dtype=np.float64)))

    def recentered_windows(field, cz, cx, radius):
        return recentered_windows_numba(np.ascontiguousarray(field, dtype=np.float64),
                                        np.asarray(cz, dtype=np.int64),
                                        np.asarray(cx, dtype=np.int64), int(radius))

    def hat_weights(nodes, coords):
        return hat_weights_numba(np.ascontiguousarray(nodes, dtype=np.float64),
                                 np.ascontiguousarray(coords, dtype=np.float64))

    def lbfgs_first_loop(S, Y, rho, q):
        return lbfgs_first_loop_numba(S, Y, rho, np.ascontiguousarray(q, dtype=np.float64))

    def lbfgs_second_loop(S, Y, rho, alpha, r):
        return lbfgs_second_loop_numba(S, Y, rho, alpha, np.ascontiguousarray(r, dtype=np.float64))
else:
    geyer_tau_numba = recentered_windows_numba = hat_weights_numba = None
    lbfgs_first_loop_numba = lbfgs_second_loop_numba = None
    geyer_tau = geyer_tau_numpy
    recentered_windows = recentered_windows_numpy
    hat_weights = hat_weights_numpy
    lbfgs_first_loop = lbfgs_first_loop_numpy
    lbfgs_second_loop = lbfgs_second_loop_numpy
