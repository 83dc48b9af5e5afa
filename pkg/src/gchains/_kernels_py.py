"""Pure-Python hot loops.

Reference implementations of the compiled kernels in ``_ckernels.pyx``. Both
backends evaluate the same floating point expressions in the same order, so a
given uniform stream yields bit-identical trajectories from either one.

Symbols are encoded as int8 in {-1, +1}. A lookback equal to ``t + 1`` at time
``t`` marks a step that fell through every layer of available history and was
resolved against the free boundary condition (tail contribution zero).
"""

from __future__ import annotations

from math import exp

import numpy as np

BACKEND = "python"


def logistic(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def sample_linear(u, offset, weights, tails, q=None):
    """Layered-envelope sampler for g(+1 | past) = q(offset + sum_j w_j x_{t-j}).

    ``weights[j]`` is the coefficient of lag ``j`` (``weights[0]`` unused) and
    ``tails[k]`` bounds the contribution of lags beyond ``k`` on the argument
    scale of ``q``. Both arrays need at least ``len(u)`` entries.
    """
    if q is None:
        q = logistic
    n = len(u)
    uu = np.asarray(u, dtype=np.float64).tolist()
    w = np.asarray(weights, dtype=np.float64).tolist()
    tl = np.asarray(tails, dtype=np.float64).tolist()
    xs = [0] * n
    lbs = [0] * n
    for t in range(n):
        ut = uu[t]
        s = offset
        r = tl[0]
        lo_m = q(-s - r)
        lo_p = q(s - r)
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
            nm = q(-s - r)
            npl = q(s - r)
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
            gm = q(-s)
            if gm < lo_m:
                gm = lo_m
            sym = -1 if ut < b + (gm - lo_m) else 1
            k = t + 1
        xs[t] = sym
        lbs[t] = k
    return np.array(xs, dtype=np.int8), np.array(lbs, dtype=np.int64)


def sample_markov(u, probs):
    """Layered sampler for an order-1 chain; ``probs[i][j]`` = P(next j | prev i), index 0 is -1."""
    p00, p01 = float(probs[0][0]), float(probs[0][1])
    p10, p11 = float(probs[1][0]), float(probs[1][1])
    lo_m = min(p00, p10)
    lo_p = min(p01, p11)
    base = lo_m + lo_p
    mid_m = 0.5 * (p00 + p10)
    n = len(u)
    uu = np.asarray(u, dtype=np.float64).tolist()
    xs = [0] * n
    lbs = [0] * n
    prev = 0
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
            sym = -1 if ut < base + (m - lo_m) else 1
            lbs[t] = 1
        xs[t] = sym
        prev = sym
    return np.array(xs, dtype=np.int8), np.array(lbs, dtype=np.int64)


def truncated_linear(u, offset, weights, tails, cap, q=None):
    """Sample from the envelope midpoint at depth ``min(t, cap)``; returns symbols and max half-width."""
    if q is None:
        q = logistic
    n = len(u)
    uu = np.asarray(u, dtype=np.float64).tolist()
    w = np.asarray(weights, dtype=np.float64).tolist()
    tl = np.asarray(tails, dtype=np.float64).tolist()
    xs = [0] * n
    worst = 0.0
    for t in range(n):
        k = t if t < cap else cap
        s = offset
        for j in range(1, k + 1):
            s += w[j] * xs[t - j]
        r = tl[k]
        lo = q(s - r)
        hi = q(s + r)
        half = 0.5 * (hi - lo)
        if half > worst:
            worst = half
        p_plus = 0.5 * (lo + hi)
        xs[t] = -1 if uu[t] < 1.0 - p_plus else 1
    return np.array(xs, dtype=np.int8), worst


def rho_dp(a, m_max):
    """Return-to-origin probabilities of the house-of-cards chain, epochs 0..m_max.

    ``a`` must have at least ``m_max`` entries. The state distribution at epoch
    ``M`` lives on ``0..M``, so no truncation error is incurred.
    """
    a = np.asarray(a, dtype=np.float64)[:m_max]
    fall = 1.0 - a
    v = np.zeros(m_max + 1)
    v[0] = 1.0
    rho = np.empty(m_max + 1)
    rho[0] = 1.0
    row_err = 0.0
    for m in range(1, m_max + 1):
        head = v[:m]
        zero = float(np.dot(head, fall[:m]))
        v[1 : m + 1] = head * a[:m]
        v[0] = zero
        rho[m] = zero
        row_err = max(row_err, abs(float(v[: m + 1].sum()) - 1.0))
    return rho, row_err


def gap_dp(a, m_max):
    """Exact gap pmf (1..m_max) of the streak renewal set {t : U_{t+j} < a_j for all j}.

    Runs the backward chain Y_t = max(D_t, Y_{t+1} - 1), P(D <= j) = a_j, from
    a renewal (Y = 0) until it next hits zero. ``a`` must be non-decreasing and
    have at least ``m_max`` entries. Mass that climbs to m_max or above needs
    more than m_max steps to return and is reported through the deficit.
    """
    a = np.asarray(a, dtype=np.float64)[:m_max]
    d = np.diff(a, prepend=0.0)
    v = d.copy()
    pmf = np.zeros(m_max + 1)
    for m in range(1, m_max + 1):
        pmf[m] = v[0]
        v[0] = 0.0
        nxt = np.zeros(m_max)
        nxt[: m_max - 1] = v[1:] * a[: m_max - 1]
        nxt += d * np.cumsum(v)
        v = nxt
    return pmf
