"""Hot numeric kernels, compiled with numba when available.

Each kernel has a pure-numpy implementation (`*_numpy`) and, when numba
is importable, a compiled twin (`*_numba`).  The unsuffixed name is the
selected implementation: the numba one unless SCTLAB_DISABLE_NUMBA is
set.  Both variants compute the same formulas; they may differ by a few
ulps because of summation order.

Kernels:
  trig_eval(cr, ci, xs)      evaluate a real trig interpolant at points
  hilbert_alpha_scan(...)    pair enumeration for the cone gauge alpha
  pair_field_tensor(...)     O(M^2) all-to-all mean field, tensor kernel
  pair_field_difference(...) O(M^2) all-to-all mean field, g(y-x) kernel
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA

_TWO_PI = 2.0 * math.pi
_EVAL_CHUNK = 4096


# --------------------------------------------------------------------------
# trig interpolant evaluation
#
# Coefficients are rfft(values)/n: cr/ci hold real and imaginary parts for
# modes 0..m (m = n/2).  The interpolant is
#   f(x) = cr[0] + sum_{k=1}^{m-1} 2*(cr[k] cos(2 pi k x) - ci[k] sin(2 pi k x))
#          + cr[m] cos(2 pi m x)
# which reproduces the samples at the grid points.


def trig_eval_numpy(cr, ci, xs):
    m = cr.size - 1
    out = np.empty(xs.size)
    k = np.arange(1, m)
    for start in range(0, xs.size, _EVAL_CHUNK):
        stop = min(start + _EVAL_CHUNK, xs.size)
        ang = _TWO_PI * xs[start:stop, None] * k[None, :]
        out[start:stop] = (
            cr[0]
            + 2.0 * (np.cos(ang) @ cr[1:m] - np.sin(ang) @ ci[1:m])
            + cr[m] * np.cos(_TWO_PI * m * xs[start:stop])
        )
    return out


def _trig_eval_loop(cr, ci, xs):
    m = cr.size - 1
    out = np.empty(xs.size)
    for i in range(xs.size):
        wx = _TWO_PI * xs[i]
        acc = cr[0] + cr[m] * math.cos(wx * m)
        for k in range(1, m):
            ang = wx * k
            acc += 2.0 * (cr[k] * math.cos(ang) - ci[k] * math.sin(ang))
        out[i] = acc
    return out


# --------------------------------------------------------------------------
# Hilbert-metric gauge
#
# alpha(den, num) = inf over the grid of num/den and over ordered grid
# pairs (x, y), x != y, of
#   (e^{a d(x,y)} num(x) - num(y)) / (e^{a d(x,y)} den(x) - den(y))
# with d the circle distance.  Pairs with non-positive denominator are
# skipped (cone membership of `den` makes them positive up to
# discretization noise).


def hilbert_alpha_scan_numpy(den, num, a, stride):
    best = float(np.min(num / den))
    n = den.size
    idx = np.arange(0, n, stride)
    x = idx / n
    d = np.abs(x[:, None] - x[None, :])
    d = np.minimum(d, 1.0 - d)
    e = np.exp(a * d)
    dm = e * den[idx, None] - den[None, idx]
    nm = e * num[idx, None] - num[None, idx]
    mask = dm > 0.0
    np.fill_diagonal(mask, False)
    if np.any(mask):
        best = min(best, float(np.min(nm[mask] / dm[mask])))
    return best


def _hilbert_alpha_loop(den, num, a, stride):
    n = den.size
    best = np.inf
    for i in range(n):
        r = num[i] / den[i]
        if r < best:
            best = r
    for i in range(0, n, stride):
        xi = i / n
        for j in range(0, n, stride):
            if i == j:
                continue
            d = abs(xi - j / n)
            if d > 0.5:
                d = 1.0 - d
            e = math.exp(a * d)
            dm = e * den[i] - den[j]
            if dm <= 0.0:
                continue
            r = (e * num[i] - num[j]) / dm
            if r < best:
                best = r
    return best


# --------------------------------------------------------------------------
# all-to-all particle mean field, exact O(M^2) accumulation
#
# Tensor form: h(x, y) = sum_r c_r T_r(2 pi kx_r x) S_r(2 pi ky_r y) with
# T, S in {cos, sin} encoded as 0/1.  Difference form: h(x, y) = g(y - x)
# with g(u) = sum_r a_r cos(2 pi k_r u) + b_r sin(2 pi k_r u).
# The per-particle trig factors are tabulated first; the pairwise sum
# itself stays a literal O(M^2) loop.


def _pair_chunk(M):
    # keep chunk x M pair blocks around 32 MB
    return max(1, (1 << 22) // max(M, 1))


def pair_field_tensor_numpy(x, coef, kx, fx, ky, fy):
    M = x.size
    tx = np.empty((coef.size, M))
    ty = np.empty((coef.size, M))
    for r in range(coef.size):
        ax = _TWO_PI * kx[r] * x
        ay = _TWO_PI * ky[r] * x
        tx[r] = np.cos(ax) if fx[r] == 0 else np.sin(ax)
        ty[r] = np.cos(ay) if fy[r] == 0 else np.sin(ay)
    out = np.zeros(M)
    chunk = _pair_chunk(M)
    for start in range(0, M, chunk):
        stop = min(start + chunk, M)
        acc = np.zeros((stop - start, M))
        for r in range(coef.size):
            acc += coef[r] * tx[r, start:stop, None] * ty[r, None, :]
        out[start:stop] = acc.sum(axis=1)
    return out / M


def _pair_field_tensor_loop(x, coef, kx, fx, ky, fy):
    M = x.size
    R = coef.size
    tx = np.empty((R, M))
    ty = np.empty((R, M))
    for r in range(R):
        for i in range(M):
            ax = _TWO_PI * kx[r] * x[i]
            ay = _TWO_PI * ky[r] * x[i]
            tx[r, i] = math.cos(ax) if fx[r] == 0 else math.sin(ax)
            ty[r, i] = math.cos(ay) if fy[r] == 0 else math.sin(ay)
    out = np.zeros(M)
    for i in range(M):
        acc = 0.0
        for j in range(M):
            hij = 0.0
            for r in range(R):
                hij += coef[r] * tx[r, i] * ty[r, j]
            acc += hij
        out[i] = acc / M
    return out


def pair_field_difference_numpy(x, k, ga, gb):
    M = x.size
    out = np.zeros(M)
    chunk = _pair_chunk(M)
    for start in range(0, M, chunk):
        stop = min(start + chunk, M)
        u = x[None, :] - x[start:stop, None]
        acc = np.zeros((stop - start, M))
        for r in range(k.size):
            ang = _TWO_PI * k[r] * u
            acc += ga[r] * np.cos(ang) + gb[r] * np.sin(ang)
        out[start:stop] = acc.sum(axis=1)
    return out / M


def _pair_field_difference_loop(x, k, ga, gb):
    M = x.size
    out = np.zeros(M)
    for i in range(M):
        acc = 0.0
        for j in range(M):
            u = x[j] - x[i]
            for r in range(k.size):
                ang = _TWO_PI * k[r] * u
                acc += ga[r] * math.cos(ang) + gb[r] * math.sin(ang)
        out[i] = acc / M
    return out


if HAVE_NUMBA:
    from numba import njit

    trig_eval_numba = njit(cache=True)(_trig_eval_loop)
    hilbert_alpha_scan_numba = njit(cache=True)(_hilbert_alpha_loop)
    pair_field_tensor_numba = njit(cache=True)(_pair_field_tensor_loop)
    pair_field_difference_numba = njit(cache=True)(_pair_field_difference_loop)
else:  # pragma: no cover - depends on environment
    trig_eval_numba = None
    hilbert_alpha_scan_numba = None
    pair_field_tensor_numba = None
    pair_field_difference_numba = None

if USE_NUMBA:
    trig_eval = trig_eval_numba
    hilbert_alpha_scan = hilbert_alpha_scan_numba
    pair_field_tensor = pair_field_tensor_numba
    pair_field_difference = pair_field_difference_numba
else:
    trig_eval = trig_eval_numpy
    hilbert_alpha_scan = hilbert_alpha_scan_numpy
    pair_field_tensor = pair_field_tensor_numpy
    pair_field_difference = pair_field_difference_numpy
