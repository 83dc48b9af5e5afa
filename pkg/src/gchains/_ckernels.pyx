# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; mirrors ``_kernels_py`` expression for expression."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

BACKEND = "cython"


cdef inline double _logistic(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def logistic(double x):
    return _logistic(x)


def sample_linear(u, double offset, weights, tails, q=None):
    if q is not None:
        from gchains import _kernels_py
        return _kernels_py.sample_linear(u, offset, weights, tails, q)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] tl = np.ascontiguousarray(tails, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    if w.shape[0] < n or tl.shape[0] < n:
        raise ValueError("weights and tails need at least len(u) entries")
    out_x = np.zeros(n, dtype=np.int8)
    out_lb = np.zeros(n, dtype=np.int64)
    cdef signed char[::1] xs = out_x
    cdef long long[::1] lbs = out_lb
    cdef Py_ssize_t t, k
    cdef double ut, s, r, lo_m, lo_p, nm, npl, a, b, gm
    cdef signed char sym
    with nogil:
        for t in range(n):
            ut = uu[t]
            s = offset
            r = tl[0]
            lo_m = _logistic(-s - r)
            lo_p = _logistic(s - r)
            if ut < lo_m:
                xs[t] = -1
                continue
            b = lo_m + lo_p
            if r == 0.0:
                b = 1.0
            if ut < b:
                xs[t] = 1
                continue
            sym = 0
            k = 0
            while k < t:
                k += 1
                s += w[k] * xs[t - k]
                r = tl[k]
                nm = _logistic(-s - r)
                npl = _logistic(s - r)
                if nm < lo_m:
                    nm = lo_m
                if npl < lo_p:
                    npl = lo_p
                a = b + (nm - lo_m)
                if ut < a:
                    sym = -1
                    break
                b = a + (npl - lo_p)
                if r == 0.0:
                    b = 1.0
                if ut < b:
                    sym = 1
                    break
                lo_m = nm
                lo_p = npl
            if sym == 0:
                gm = _logistic(-s)
                if gm < lo_m:
                    gm = lo_m
                if ut < b + (gm - lo_m):
                    sym = -1
                else:
                    sym = 1
                k = t + 1
            xs[t] = sym
            lbs[t] = k
    return out_x, out_lb


def sample_markov(u, probs):
    cdef double p00 = float(probs[0][0]), p01 = float(probs[0][1])
    cdef double p10 = float(probs[1][0]), p11 = float(probs[1][1])
    cdef double lo_m = min(p00, p10)
    cdef double lo_p = min(p01, p11)
    cdef double base = lo_m + lo_p
    cdef double mid_m = 0.5 * (p00 + p10)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    out_x = np.zeros(n, dtype=np.int8)
    out_lb = np.zeros(n, dtype=np.int64)
    cdef signed char[::1] xs = out_x
    cdef long long[::1] lbs = out_lb
    cdef Py_ssize_t t
    cdef double ut, m
    cdef signed char sym, prev = 0
    with nogil:
        for t in range(n):
            ut = uu[t]
            if ut < lo_m:
                sym = -1
            elif ut < base:
                sym = 1
            else:
                if t == 0:
                    m = mid_m
                elif prev > 0:
                    m = p10
                else:
                    m = p00
                if ut < base + (m - lo_m):
                    sym = -1
                else:
                    sym = 1
                lbs[t] = 1
            xs[t] = sym
            prev = sym
    return out_x, out_lb


def truncated_linear(u, double offset, weights, tails, Py_ssize_t cap, q=None):
    if q is not None:
        from gchains import _kernels_py
        return _kernels_py.truncated_linear(u, offset, weights, tails, cap, q)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] tl = np.ascontiguousarray(tails, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    out_x = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] xs = out_x
    cdef Py_ssize_t t, j, k
    cdef double s, r, lo, hi, half, p_plus, worst = 0.0
    with nogil:
        for t in range(n):
            k = t if t < cap else cap
            s = offset
            for j in range(1, k + 1):
                s += w[j] * xs[t - j]
            r = tl[k]
            lo = _logistic(s - r)
            hi = _logistic(s + r)
            half = 0.5 * (hi - lo)
            if half > worst:
                worst = half
            p_plus = 0.5 * (lo + hi)
            if uu[t] < 1.0 - p_plus:
                xs[t] = -1
            else:
                xs[t] = 1
    return out_x, worst


def rho_dp(a, Py_ssize_t m_max):
    cdef const double[::1] aa = np.ascontiguousarray(a, dtype=np.float64)
    if aa.shape[0] < m_max:
        raise ValueError("a needs at least m_max entries")
    v_arr = np.zeros(m_max + 1)
    rho_arr = np.empty(m_max + 1)
    cdef double[::1] v = v_arr
    cdef double[::1] rho = rho_arr
    cdef Py_ssize_t m, k
    cdef double zero, tot, err = 0.0
    v[0] = 1.0
    rho[0] = 1.0
    with nogil:
        for m in range(1, m_max + 1):
            zero = 0.0
            for k in range(m):
                zero += v[k] * (1.0 - aa[k])
            for k in range(m, 0, -1):
                v[k] = v[k - 1] * aa[k - 1]
            v[0] = zero
            rho[m] = zero
            tot = 0.0
            for k in range(m + 1):
                tot += v[k]
            if fabs(tot - 1.0) > err:
                err = fabs(tot - 1.0)
    return rho_arr, err


def gap_dp(a, Py_ssize_t m_max):
    cdef const double[::1] aa = np.ascontiguousarray(a, dtype=np.float64)
    if aa.shape[0] < m_max:
        raise ValueError("a needs at least m_max entries")
    d_arr = np.diff(np.asarray(aa[:m_max]), prepend=0.0)
    cdef double[::1] d = d_arr
    v_arr = d_arr.copy()
    nxt_arr = np.zeros(m_max)
    pmf_arr = np.zeros(m_max + 1)
    cdef double[::1] v = v_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] pmf = pmf_arr
    cdef Py_ssize_t m, y
    cdef double cum
    with nogil:
        for m in range(1, m_max + 1):
            pmf[m] = v[0]
            v[0] = 0.0
            cum = 0.0
            for y in range(m_max):
                cum += v[y]
                nxt[y] = d[y] * cum
                if y + 1 < m_max:
                    nxt[y] += v[y + 1] * aa[y]
            for y in range(m_max):
                v[y] = nxt[y]
    return pmf_arr
