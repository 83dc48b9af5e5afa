"""Renewal calculus of the house-of-cards chain.

The chain climbs from ``k`` to ``k + 1`` with probability ``a_k`` and falls to 0
otherwise. Two views of the same renewal structure are exposed:

* :func:`rho_table` -- the literal return probabilities
  ``rho_M = P(W_M = 0 | W_0 = 0)``;
* :func:`gap_law_dp` -- the exact gap law of the renewal set the sampler
  detects, ``{t : U_{t+j} < a_j for all j >= 0}``.

They are tied by ``P(gap > M) = rho_M``, so ``P(gap >= M) = rho_{M-1}``
(with ``rho_0 = 1``) and the moments of the gap follow from the table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from . import _backend
from .errors import PreconditionError, ZeroMean

M_MAX_DEFAULT = 10_000
_CONVERGENCE_TOL = 1e-6
_TAIL_INFLATION = 1.0 + 1e-12


@dataclass(frozen=True)
class DecayClass:
    """Tail bound ``a_k >= 1 - const * log(k)**log_exp / k**pow_exp`` for ``k >= threshold``."""

    log_exp: float
    pow_exp: float
    const: float
    threshold: int = 2

    def __post_init__(self):
        if not self.pow_exp >= 1.0:
            raise PreconditionError("pow_exp must be >= 1")
        if not self.const > 0.0:
            raise PreconditionError("const must be positive")
        if self.threshold < 2:
            raise PreconditionError("threshold must be >= 2")

    def bound(self, k) -> np.ndarray:
        """``1 - a_k`` upper bound at ``k`` (valid for ``k >= threshold``)."""
        k = np.asarray(k, dtype=np.float64)
        if math.isinf(self.pow_exp):
            return np.zeros_like(k)
        return self.const * np.log(k) ** self.log_exp / k**self.pow_exp


def classify_decay(d: DecayClass) -> str:
    """Strongest limit-theorem regime implied by the decay class.

    ``fclt_var2``: the autocovariance form of the limiting variance applies
    (and hence also the block form); ``fclt_var1``: the block form applies;
    ``none``: the bound is too weak to conclude.
    """
    a, b = d.log_exp, d.pow_exp
    if b > 2.0 or (a < -1.0 and b == 2.0):
        return "fclt_var2"
    if b > 1.0 or (a < -1.0 and b == 1.0):
        return "fclt_var1"
    return "none"


def power_tail_sum(const: float, log_exp: float, pow_exp: float, start: int) -> float:
    """Upper bound on ``sum_{k >= start} const * log(k)**log_exp / k**pow_exp``; ``inf`` if divergent."""
    a, b = float(log_exp), float(pow_exp)
    start = max(int(start), 2)
    if math.isinf(b):
        return 0.0
    if b < 1.0 or (b == 1.0 and a >= -1.0):
        return math.inf
    # summand is decreasing once log(x) > a / b
    knee = max(start, int(math.ceil(math.exp(max(a, 0.0) / b))) + 2)
    stop = knee + 2000
    ks = np.arange(start, stop, dtype=np.float64)
    explicit = float(np.sum(np.log(ks) ** a / ks**b))
    u0 = math.log(stop - 1)
    if b == 1.0:
        tail = u0 ** (a + 1.0) / (-a - 1.0)
    elif a <= 0.0:
        # log(k)**a is non-increasing, so it can be pulled out at k = stop
        tail = math.log(stop) ** a * float(special.zeta(b, stop))
    else:
        # integral of log(x)**a x**-b over [stop - 1, inf) as an upper incomplete gamma
        s = a + 1.0
        tail = float(special.gammaincc(s, (b - 1.0) * u0) * special.gamma(s)) / (b - 1.0) ** s
    return const * (explicit + tail) * _TAIL_INFLATION


# ---------------------------------------------------------------------------
# tables


def regularize(a_seq: Sequence[float], length: int) -> np.ndarray:
    """Running maximum of ``a_seq``, padded with its last value to ``length`` entries."""
    a = np.asarray(a_seq, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise PreconditionError("a_seq is empty")
    if np.any((a < 0.0) | (a > 1.0)) or not np.all(np.isfinite(a)):
        raise PreconditionError("a_seq values must lie in [0, 1]")
    a = np.maximum.accumulate(a)
    if a.size < length:
        a = np.concatenate((a, np.full(length - a.size, a[-1])))
    return a[:length]


@dataclass
class RhoTable:
    """Literal return probabilities ``rho[M]``, ``M = 0..M_max`` (``rho[0] = 1``)."""

    rho: np.ndarray
    a_raw: np.ndarray
    a_regularized: np.ndarray
    mean_gap: float
    mean_gap_converged: bool
    second_moment: float
    second_moment_converged: bool
    row_error: float
    tail_ratio: float | None = None

    @property
    def m_max(self) -> int:
        return len(self.rho) - 1

    def report(self) -> dict:
        def fmt(v, ok):
            return v if ok else "divergent-or-unconverged"

        return {
            "m_max": self.m_max,
            "mean_gap": fmt(self.mean_gap, self.mean_gap_converged),
            "second_moment": fmt(self.second_moment, self.second_moment_converged),
            "partial_mean_gap": self.mean_gap,
            "partial_second_moment": self.second_moment,
            "geometric_tail_ratio": self.tail_ratio,
            "row_error": self.row_error,
        }


def _geometric_ratio(values: np.ndarray) -> float | None:
    tail = values[-min(50, len(values) - 1) :]
    tail = tail[tail > 0.0]
    if len(tail) < 2:
        return None
    ratio = float(np.exp(np.mean(np.diff(np.log(tail)))))
    return ratio if ratio < 1.0 else None


def rho_table(a_seq: Sequence[float], m_max: int = M_MAX_DEFAULT, backend: str | None = None) -> RhoTable:
    """``rho_M = P(W_M = 0 | W_0 = 0)`` for ``M <= m_max`` by forward DP on the state distribution."""
    if m_max < 1:
        raise PreconditionError("m_max must be >= 1")
    raw = np.asarray(a_seq, dtype=np.float64).reshape(-1)
    a = regularize(raw, m_max)
    rho, row_err = _backend.get(backend).rho_dp(a, m_max)
    # P(gap >= i) = rho_{i-1}: the table covers i = 1..m_max + 1
    ks = np.arange(0, m_max + 1, dtype=np.float64)
    mean = float(np.sum(rho))
    second = float(np.sum((2.0 * ks + 1.0) * rho))
    last = float(rho[-1])
    mean_ok = last * m_max <= _CONVERGENCE_TOL * max(mean, 1.0)
    second_ok = last * m_max**2 <= _CONVERGENCE_TOL * max(second, 1.0)
    return RhoTable(
        rho=rho,
        a_raw=raw,
        a_regularized=a,
        mean_gap=mean,
        mean_gap_converged=mean_ok,
        second_moment=second,
        second_moment_converged=second_ok,
        row_error=float(row_err),
        tail_ratio=_geometric_ratio(rho[1:]),
    )


@dataclass
class GapLaw:
    """Probability mass function of the generic gap ``T_2 - T_1`` on ``1..M_max``.

    ``pmf[0]`` is unused (always 0). ``deficit`` is the mass beyond ``M_max``.
    """

    pmf: np.ndarray
    source: str
    count: int | None = None
    counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def m_max(self) -> int:
        return len(self.pmf) - 1

    @property
    def deficit(self) -> float:
        return max(0.0, 1.0 - float(np.sum(self.pmf)))

    @property
    def support(self) -> np.ndarray:
        return np.arange(len(self.pmf))

    def mean(self) -> float:
        return float(np.sum(self.support * self.pmf))

    def second_moment(self) -> float:
        return float(np.sum(self.support.astype(np.float64) ** 2 * self.pmf))

    def survival(self) -> np.ndarray:
        """``P(gap >= M)`` for ``M = 0..M_max`` (truncated mass counted as surviving)."""
        cdf_before = np.concatenate(([0.0], np.cumsum(self.pmf)[:-1]))
        return 1.0 - cdf_before

    def forward_tail(self) -> np.ndarray:
        """``P(T_1 > i)`` for ``i = 0..M_max`` in the stationary process (no regeneration in ``(0, i]``)."""
        mean = self.mean()
        if mean <= 0.0:
            raise ZeroMean("gap law has zero mean")
        k = self.support.astype(np.float64)
        # P(T_1 > i) = sum_{k > i} (k - i) pmf(k) / mean
        s1 = np.cumsum((k * self.pmf)[::-1])[::-1]
        s0 = np.cumsum(self.pmf[::-1])[::-1]
        out = np.zeros(len(k))
        out[:-1] = (s1[1:] - k[:-1] * s0[1:]) / mean
        return np.clip(out, 0.0, 1.0)


def gap_law_dp(a_seq: Sequence[float], m_max: int = M_MAX_DEFAULT, backend: str | None = None) -> GapLaw:
    """Exact gap law of the streak renewal set driven by ``a_seq`` (regularized)."""
    if m_max < 1:
        raise PreconditionError("m_max must be >= 1")
    a = regularize(a_seq, m_max)
    pmf = _backend.get(backend).gap_dp(a, m_max)
    return GapLaw(np.asarray(pmf), "dp")


def gap_law_empirical(gaps: Sequence[int], m_max: int | None = None) -> GapLaw:
    g = np.asarray(gaps, dtype=np.int64).reshape(-1)
    if g.size == 0:
        raise PreconditionError("no gaps supplied")
    if np.any(g < 1):
        raise PreconditionError("gaps must be >= 1")
    top = int(g.max()) if m_max is None else int(m_max)
    counts = np.bincount(g[g <= top], minlength=top + 1)
    return GapLaw(counts / g.size, "empirical", count=int(g.size), counts=counts)


def size_biased_gap(gap: GapLaw) -> GapLaw:
    """Law of the gap straddling the origin: ``k * pmf(k) / mean``."""
    mean = gap.mean()
    if not mean > 0.0:
        raise ZeroMean("gap law has zero mean on its support")
    pmf = gap.support * gap.pmf / mean
    return GapLaw(pmf, f"size_biased[{gap.source}]")


def straddle_mean_identity(gap: GapLaw) -> tuple[float, float]:
    """Mean of the size-biased law and ``E(gap**2) / E(gap)``; equal for exact inputs."""
    return size_biased_gap(gap).mean(), gap.second_moment() / gap.mean()


# ---------------------------------------------------------------------------
# summability


def summability_checks(a_seq: Sequence[float], decay: DecayClass | None = None) -> dict:
    """Certify ``sum (1 - a_k)`` and ``sum k (1 - a_k)``.

    ``a_seq`` covers ``k = 0..len-1`` explicitly; beyond that (and from the
    decay threshold on) the decay-class bound is summed in closed form. With no
    decay class the explicit sums are reported as partial and nothing is
    certified.
    """
    a = np.asarray(a_seq, dtype=np.float64).reshape(-1)
    n = a.size
    ks = np.arange(n, dtype=np.float64)
    s0 = float(np.sum(1.0 - a))
    s1 = float(np.sum(ks * (1.0 - a)))
    if decay is None:
        return {
            "sum_one_minus_a": "uncertified",
            "sum_k_one_minus_a": "uncertified",
            "partial_sum_one_minus_a": s0,
            "partial_sum_k_one_minus_a": s1,
            "product_positive": False,
            "second_moment_certified": False,
        }
    start = max(n, decay.threshold)
    # indices between the explicit entries and the threshold are only known to satisfy 1 - a_k <= 1
    unknown = np.arange(n, start, dtype=np.float64)
    s0 += float(unknown.size)
    s1 += float(np.sum(unknown))
    tot0 = s0 + power_tail_sum(decay.const, decay.log_exp, decay.pow_exp, start)
    tot1 = s1 + power_tail_sum(decay.const, decay.log_exp, decay.pow_exp - 1.0, start)
    min_a = float(np.min(a)) if n else 1.0
    positive = math.isfinite(tot0) and min_a > 0.0
    return {
        "sum_one_minus_a": tot0 if math.isfinite(tot0) else "divergent",
        "sum_k_one_minus_a": tot1 if math.isfinite(tot1) else "divergent",
        "product_positive": bool(positive),
        "second_moment_certified": bool(positive and math.isfinite(tot1)),
    }


def log_product_tail(a_lower: np.ndarray, start: int, decay: DecayClass | None) -> float:
    """Upper bound on ``-log prod_{k >= start} a_k`` from explicit entries plus the decay tail.

    Returns ``inf`` when the product cannot be certified positive.
    """
    a = np.asarray(a_lower, dtype=np.float64)
    n = a.size
    if start < n:
        seg = a[start:]
        if np.any(seg <= 0.0):
            return math.inf
        explicit = float(-np.sum(np.log(seg)))
    else:
        explicit = 0.0
    beyond = max(start, n)
    if decay is None:
        return math.inf
    if math.isinf(decay.pow_exp):
        return explicit if beyond >= decay.threshold else math.inf
    k0 = max(beyond, decay.threshold)
    if k0 > beyond:
        return math.inf
    worst = float(decay.bound(max(k0, 2)))
    if worst >= 1.0:
        return math.inf
    # -log(1 - x) <= x / (1 - x) for x in [0, 1); x_k below its value at k0 once decreasing
    tail = power_tail_sum(decay.const, decay.log_exp, decay.pow_exp, k0) / (1.0 - worst)
    return explicit + tail


# ---------------------------------------------------------------------------
# size-biased straddling gaps


def straddling_gaps(renewals: Sequence[int], checkpoints: Sequence[int]) -> np.ndarray:
    """Length of the renewal interval ``[T_j, T_{j+1})`` containing each checkpoint.

    Checkpoints before the first or at/after the last renewal are dropped.
    """
    r = np.asarray(renewals, dtype=np.int64)
    c = np.asarray(checkpoints, dtype=np.int64)
    if r.size < 2:
        return np.zeros(0, dtype=np.int64)
    c = c[(c >= r[0]) & (c < r[-1])]
    j = np.searchsorted(r, c, side="right") - 1
    return r[j + 1] - r[j]


@dataclass
class ChiSquareResult:
    statistic: float
    dof: int
    pvalue: float
    samples: int


def size_bias_chi2(straddle: Sequence[int], gaps: Sequence[int], min_expected: float = 5.0) -> ChiSquareResult:
    """Chi-square test of straddling gaps against ``k * pmf(k) / mean`` of the generic gaps.

    Adjacent cells are pooled from the top down until each expected count is
    at least ``min_expected``.
    """
    x = np.asarray(straddle, dtype=np.int64)
    if x.size == 0:
        raise PreconditionError("no straddling gaps supplied")
    law = size_biased_gap(gap_law_empirical(gaps))
    top = max(int(x.max()), law.m_max)
    probs = np.zeros(top + 1)
    probs[: law.m_max + 1] = law.pmf
    obs = np.bincount(x, minlength=top + 1).astype(np.float64)
    exp = probs * x.size
    cells_o, cells_e = [], []
    acc_o = acc_e = 0.0
    for k in range(top, 0, -1):
        acc_o += obs[k]
        acc_e += exp[k]
        if acc_e >= min_expected:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0.0 or acc_o > 0.0:
        if cells_e:
            cells_o[-1] += acc_o
            cells_e[-1] += acc_e
        else:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
    o = np.asarray(cells_o)
    e = np.asarray(cells_e)
    dof = max(len(o) - 1, 0)
    if dof == 0:
        return ChiSquareResult(0.0, 0, 1.0, int(x.size))
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = float(np.sum(np.where(e > 0, (o - e) ** 2 / e, np.where(o > 0, np.inf, 0.0))))
    return ChiSquareResult(stat, dof, float(stats.chi2.sf(stat, dof)), int(x.size))
