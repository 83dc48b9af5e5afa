"""Limiting-variance estimators and CLT diagnostics for additive functionals ``S_n = sum f(X_i)``.

Three routes to the limiting variance are provided and are expected to agree:

* :func:`variance_block` -- mean squared block sum over mean block length;
* :func:`variance_autocov` -- ``E f(X_0)^2 + 2 sum_i E f(X_0) f(X_i)``;
* :func:`variance_replication` -- sample variance of ``S_n / sqrt(n)`` over
  independent replicas.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import erfc

from .errors import InsufficientData, LagTooLarge, NonCenteredObservable, PreconditionError
from .kernel import MarkovOrder1, ModelSpec, check_symbol, is_linear
from .regen import BlockSet, Trajectory, merge_blocks, observable_values
from .renewal import GapLaw, gap_law_empirical

MIN_BLOCKS = 30
MIN_REPLICAS = 100
LAG_RATIO = 50
PATH_GRID = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class ObservableF:
    """Real function on {-1, +1} with its centering status.

    ``centering`` is ``"exact"`` when ``E f(X_0) = 0`` is known analytically,
    ``"empirical"`` when a pilot estimate (standard error ``center_se``) was
    subtracted, and ``"none"`` otherwise.
    """

    minus: float
    plus: float
    centering: str = "exact"
    center_estimate: float = 0.0
    center_se: float = 0.0

    @property
    def values(self) -> dict[int, float]:
        return {-1: self.minus, 1: self.plus}

    def __call__(self, x: int) -> float:
        return self.plus if x > 0 else self.minus

    @property
    def sup(self) -> float:
        return max(abs(self.minus), abs(self.plus))

    def scaled(self, c: float) -> "ObservableF":
        return ObservableF(c * self.minus, c * self.plus, self.centering, c * self.center_estimate, abs(c) * self.center_se)

    def shifted(self, delta: float, centering: str = "none") -> "ObservableF":
        return ObservableF(self.minus + delta, self.plus + delta, centering)

    @classmethod
    def identity(cls) -> "ObservableF":
        return cls(-1.0, 1.0)

    @classmethod
    def zero(cls) -> "ObservableF":
        return cls(0.0, 0.0)

    @classmethod
    def centered_identity(cls, mean: float, se: float) -> "ObservableF":
        """``f(x) = x - mean`` with ``mean`` an empirical estimate of ``E(X_0)``."""
        return cls(-1.0 - mean, 1.0 - mean, "empirical", mean, se)


@dataclass
class VarianceEstimate:
    value: float
    std_error: float
    method: str
    n_effective: int
    details: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def z_score(a: VarianceEstimate, b: VarianceEstimate) -> float:
    """Standardized difference of two independent-ish estimates (0 when both are exact and equal)."""
    diff = abs(a.value - b.value)
    se = math.hypot(a.std_error, b.std_error)
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / se


def agreement(estimates: Sequence[VarianceEstimate]) -> dict[str, float]:
    out = {}
    for i, a in enumerate(estimates):
        for b in estimates[i + 1 :]:
            out[f"{a.method}~{b.method}"] = z_score(a, b)
    return out


# ---------------------------------------------------------------------------
# block estimator


def _as_blockset(blocks) -> BlockSet:
    if isinstance(blocks, BlockSet):
        return blocks
    return merge_blocks(list(blocks))


def variance_block(blocks, min_blocks: int = MIN_BLOCKS) -> VarianceEstimate:
    """``mean(xi**2) / mean(gap)`` over complete blocks, with a delta-method standard error.

    ``blocks`` is a :class:`BlockSet` or a sequence of them (pooled).
    """
    bs = _as_blockset(blocks)
    m = len(bs)
    if m < min_blocks:
        raise InsufficientData(f"need at least {min_blocks} complete blocks, have {m}")
    xi = np.asarray(bs.xi, dtype=np.float64)
    gaps = np.asarray(bs.gaps, dtype=np.float64)
    x2 = xi * xi
    mean_gap = float(gaps.mean())
    value = float(x2.mean()) / mean_gap
    resid = x2 - value * gaps
    se = float(math.sqrt(np.sum(resid * resid) / (m * (m - 1)))) / mean_gap
    mean_xi = float(xi.mean())
    se_xi = float(xi.std(ddof=1) / math.sqrt(m))
    return VarianceEstimate(
        value=value,
        std_error=se,
        method="block",
        n_effective=m,
        details={
            "n_blocks": m,
            "mean_gap": mean_gap,
            "mean_xi": mean_xi,
            "mean_xi_se": se_xi,
            "mean_xi_z": abs(mean_xi) / se_xi if se_xi > 0 else (0.0 if mean_xi == 0 else math.inf),
        },
    )


# ---------------------------------------------------------------------------
# autocovariance estimator


@dataclass
class AutocovStats:
    """Mergeable lag-product sums: ``sums[i] = sum_t v_t v_{t+i}`` over ``counts[i]`` pairs.

    ``min_len`` is the shortest contributing series, which limits the usable lag.
    """

    sums: np.ndarray
    counts: np.ndarray
    total: float
    n: int
    min_len: int

    def merge(self, other: "AutocovStats") -> "AutocovStats":
        L = min(len(self.sums), len(other.sums))
        return AutocovStats(
            self.sums[:L] + other.sums[:L],
            self.counts[:L] + other.counts[:L],
            self.total + other.total,
            self.n + other.n,
            min(self.min_len, other.min_len),
        )

    def gamma(self) -> np.ndarray:
        return self.sums / np.maximum(self.counts, 1)


def autocov_stats(values: np.ndarray, max_lag: int) -> AutocovStats:
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    L = min(int(max_lag), n - 1)
    if L < 0:
        raise InsufficientData("empty series")
    if L <= 64:
        sums = np.array([float(np.dot(v[: n - i], v[i:])) for i in range(L + 1)])
    else:
        size = 1 << int(math.ceil(math.log2(2 * n)))
        fv = np.fft.rfft(v, size)
        sums = np.fft.irfft(fv * np.conj(fv), size)[: L + 1]
    counts = (n - np.arange(L + 1)).astype(np.float64)
    return AutocovStats(sums, counts, float(v.sum()), n, n)


def merge_autocov(parts: Sequence[AutocovStats]) -> AutocovStats:
    if not parts:
        raise InsufficientData("no autocovariance statistics")
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


def renewal_series(traj: Trajectory, f) -> np.ndarray:
    """Observable values from the first confirmed renewal onward (the stationary part)."""
    r = traj.renewal_indices
    start = int(r[0]) if len(r) else 0
    return observable_values(f, traj.symbols[start:])


def default_probe_lag(length: int) -> int:
    return max(1, min(length // LAG_RATIO, 4096))


def select_max_lag(
    gamma: np.ndarray,
    forward_tail: np.ndarray,
    cov_const: float,
    cap: int,
    rel_tol: float = 0.01,
) -> tuple[int, float]:
    """Smallest lag ``L >= 1`` whose truncation bound is below ``rel_tol`` of the running variance.

    Lags past the first regeneration after the origin are independent of it,
    so ``|E f(X_0) f(X_i)| <= cov_const * P(T_1 > i)``; the omitted part of the
    sum is at most ``2 * cov_const * sum_{i > L} P(T_1 > i)``.
    """
    cap = max(1, min(cap, len(gamma) - 1))
    tail = np.zeros(cap + 2)
    ft = np.asarray(forward_tail, dtype=np.float64)
    m = min(len(ft), cap + 2)
    tail[:m] = ft[:m]
    # suffix[L] = sum_{L < i <= cap + 1} P(T_1 > i)
    suffix = 2.0 * cov_const * np.concatenate((np.cumsum(tail[::-1])[::-1][1:], [0.0]))
    running = gamma[0] + 2.0 * np.concatenate(([0.0], np.cumsum(gamma[1 : cap + 1])))
    for L in range(1, cap + 1):
        if suffix[L] <= rel_tol * abs(running[L]) or suffix[L] == 0.0:
            return L, float(suffix[L])
    return cap, float(suffix[cap])


def covariance_constant(f) -> float:
    """``sup|f| * (max f - min f)``, which bounds ``|E f(X_0) f(X_i)|`` per unit of ``P(T_1 > i)``."""
    v = observable_values(f, np.array([-1, 1], dtype=np.int8))
    return float(np.max(np.abs(v)) * (np.max(v) - np.min(v)))


def variance_autocov(
    trajectories,
    f,
    max_lag: int | None = None,
    gap_law: GapLaw | None = None,
    taper: bool = False,
) -> VarianceEstimate:
    """Plug-in autocovariance sum up to ``max_lag`` over one or more trajectories.

    Each trajectory contributes from its first confirmed renewal onward. With
    ``max_lag=None`` the lag is chosen from the regeneration tail (``gap_law``
    if given, else the empirical gaps). Every trajectory must be at least
    ``50 * max_lag`` long.
    """
    trajs = [trajectories] if isinstance(trajectories, Trajectory) else list(trajectories)
    if not trajs:
        raise InsufficientData("no trajectories")
    series = [renewal_series(t, f) for t in trajs]
    shortest = min(len(s) for s in series)
    probe = default_probe_lag(shortest) if max_lag is None else max_lag
    if probe * LAG_RATIO > shortest:
        raise LagTooLarge(f"max_lag={probe} needs series of length >= {LAG_RATIO * probe}, have {shortest}")
    st = merge_autocov([autocov_stats(s, probe) for s in series])
    if max_lag is None and gap_law is None:
        gaps = np.concatenate([t.gaps() for t in trajs])
        gap_law = gap_law_empirical(gaps) if gaps.size else None
    return autocov_estimate(st, f, max_lag=max_lag, gap_law=gap_law, taper=taper)


def autocov_estimate(
    st: AutocovStats,
    f,
    max_lag: int | None = None,
    gap_law: GapLaw | None = None,
    taper: bool = False,
) -> VarianceEstimate:
    """Autocovariance estimate from merged lag-product statistics (see :func:`variance_autocov`)."""
    if max_lag is not None and (max_lag < 0 or max_lag * LAG_RATIO > st.min_len):
        raise LagTooLarge(f"max_lag={max_lag} needs series of length >= {LAG_RATIO * max_lag}, have {st.min_len}")
    gamma_all = st.gamma()
    c = covariance_constant(f)
    tail_bound = None
    if max_lag is None:
        cap = min(len(gamma_all) - 1, max(1, st.min_len // LAG_RATIO))
        if gap_law is None:
            L = cap
        else:
            L, tail_bound = select_max_lag(gamma_all, gap_law.forward_tail(), c, cap)
        policy = "regeneration_tail"
    else:
        if max_lag >= len(gamma_all):
            raise LagTooLarge(f"statistics only cover lags up to {len(gamma_all) - 1}")
        L = max_lag
        policy = "fixed"
        if gap_law is not None:
            tail_bound = float(2.0 * c * np.sum(gap_law.forward_tail()[L + 1 :]))
    gamma = gamma_all[: L + 1]
    weights = 1.0 - np.arange(L + 1) / (L + 1.0) if taper else np.ones(L + 1)
    value = float(gamma[0] + 2.0 * np.sum(weights[1:] * gamma[1:]))
    n = st.n
    mean = st.total / n
    centering = getattr(f, "centering", "none")
    mean_se = math.sqrt(max(value, 0.0) / n)
    if centering == "none" and abs(mean) > 5.0 * mean_se:
        raise NonCenteredObservable(f"empirical mean {mean:.4g} is {abs(mean) / mean_se:.1f} SE from zero")
    se = abs(value) * math.sqrt(2.0 * (2 * L + 1) / n)
    center_se = float(getattr(f, "center_se", 0.0))
    if center_se:
        # a centering error c shifts every lag product by about c**2
        se = math.hypot(se, (2 * L + 1) * center_se**2)
    warnings = []
    if value < 0.0:
        warnings.append("negative raw autocovariance sum: estimator degenerate at this lag")
    return VarianceEstimate(
        value=value,
        std_error=se,
        method="autocov",
        n_effective=n,
        details={
            "max_lag": int(L),
            "lag_policy": policy,
            "taper": bool(taper),
            "lag_profile": gamma.tolist(),
            "tail_bound": tail_bound,
            "mean_f": mean,
            "mean_f_se": mean_se,
        },
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# replication estimator and normality diagnostics


def variance_replication(replicas: Sequence[float], min_replicas: int = MIN_REPLICAS) -> VarianceEstimate:
    """Sample variance of ``S_n / sqrt(n)`` replica values with a chi-square-based standard error."""
    x = np.asarray(replicas, dtype=np.float64)
    R = x.size
    if R < min_replicas:
        raise InsufficientData(f"need at least {min_replicas} replicas, have {R}")
    value = float(x.var(ddof=1))
    return VarianceEstimate(
        value=value,
        std_error=value * math.sqrt(2.0 / (R - 1)),
        method="replication",
        n_effective=R,
        details={"replicas": R, "mean": float(x.mean()), "mean_se": math.sqrt(value / R)},
    )


def normal_cdf(x) -> np.ndarray:
    """Standard normal distribution function via the complementary error function."""
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


@dataclass
class CLTResult:
    ks_distance: float
    ks_pvalue: float
    skewness: float
    excess_kurtosis: float
    replicas: int

    def to_dict(self) -> dict:
        return asdict(self)


def clt_test(replicas: Sequence[float], sigma: float, min_replicas: int = MIN_REPLICAS) -> CLTResult:
    """Kolmogorov-Smirnov distance of ``replicas / sigma`` to N(0, 1), with asymptotic p-value."""
    if not sigma > 0.0:
        raise PreconditionError("sigma must be positive")
    x = np.asarray(replicas, dtype=np.float64)
    if x.size < min_replicas:
        raise InsufficientData(f"need at least {min_replicas} replicas, have {x.size}")
    z = x / sigma
    res = stats.ks_1samp(z, normal_cdf, method="asymp")
    with np.errstate(all="ignore"):
        skew = float(stats.skew(z))
        kurt = float(stats.kurtosis(z))
    return CLTResult(float(res.statistic), float(res.pvalue), skew, kurt, int(x.size))


def partial_sums(values: np.ndarray, grid: Sequence[float] = PATH_GRID) -> np.ndarray:
    """``S_{floor(n t)} / sqrt(n)`` at each grid point ``t``."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    c = np.concatenate(([0.0], np.cumsum(v)))
    idx = np.floor(np.asarray(grid) * n).astype(np.int64)
    return c[idx] / math.sqrt(n)


def path_variance_check(
    paths: np.ndarray,
    sigma2: float,
    sigma2_se: float = 0.0,
    grid: Sequence[float] = PATH_GRID,
) -> list[dict]:
    """Compare replica variances of the partial-sum path with ``sigma2 * t`` at each grid point."""
    P = np.asarray(paths, dtype=np.float64)
    R = P.shape[0]
    out = []
    for j, t in enumerate(grid):
        v = float(P[:, j].var(ddof=1))
        se = math.hypot(v * math.sqrt(2.0 / (R - 1)), t * sigma2_se)
        target = sigma2 * t
        z = abs(v - target) / se if se > 0 else (0.0 if v == target else math.inf)
        out.append({"t": t, "variance": v, "target": target, "se": se, "z": z})
    return out


# ---------------------------------------------------------------------------
# consistency and Wald identities


def conditional_probs(model: ModelSpec, symbols: np.ndarray, x: int, depth: int) -> tuple[np.ndarray, float]:
    """Midpoint estimate of ``g(x | X_{<t})`` from the last ``depth`` symbols, for ``t >= depth``.

    Returns the array (aligned with ``t = depth..n-1``) and the largest
    envelope half-width, which bounds the truncation error.
    """
    xs = np.asarray(symbols, dtype=np.float64)
    n = xs.size
    if isinstance(model, MarkovOrder1):
        depth = max(depth, 1)
        col = 0 if x < 0 else 1
        prev = xs[depth - 1 : n - 1]
        probs = np.where(prev > 0, model.matrix[1][col], model.matrix[0][col])
        return probs, 0.0
    w = np.asarray(model.weights(depth))
    r = float(model.logit_tails(depth)[depth])
    kernel = np.concatenate(([0.0], w[1 : depth + 1]))
    s = model.offset + np.convolve(xs, kernel)[depth:n]
    q = model.link
    sign = 1.0 if x > 0 else -1.0
    lo = q.many(sign * s - r)
    hi = q.many(sign * s + r)
    return 0.5 * (lo + hi), float(np.max(hi - lo) / 2.0) if len(lo) else 0.0


@dataclass
class ConsistencyResult:
    discrepancy: float
    std_error: float
    samples: int
    truncation_error: float

    @property
    def z(self) -> float:
        if self.std_error == 0.0:
            return 0.0 if abs(self.discrepancy) <= self.truncation_error else math.inf
        return abs(self.discrepancy) / self.std_error

    def to_dict(self) -> dict:
        return asdict(self)


def consistency_check(
    model: ModelSpec,
    traj: Trajectory,
    h: Callable[[np.ndarray], np.ndarray],
    x: int,
    h_depth: int = 0,
    depth: int | None = None,
) -> ConsistencyResult:
    """Time-average estimate of ``E(h g(x | .)) - E(h 1{X_0 = x})``.

    ``h`` maps an array of windows (shape ``(N, h_depth)``, most recent first)
    to ``N`` real values. The summands are martingale differences, so the
    plain standard error of their mean is valid.
    """
    x = check_symbol(x)
    if depth is None:
        depth = 1 if isinstance(model, MarkovOrder1) else model.truncation
    depth = max(depth, h_depth, 1)
    xs = np.asarray(traj.symbols)
    r = traj.renewal_indices
    start = int(r[0]) if len(r) else 0
    t0 = start + depth
    if t0 >= xs.size:
        raise InsufficientData("trajectory too short for the requested depth")
    probs, trunc = conditional_probs(model, xs, x, depth)
    probs = probs[t0 - depth :]
    ts = np.arange(t0, xs.size)
    if h_depth > 0:
        windows = np.lib.stride_tricks.sliding_window_view(xs, h_depth)[ts - h_depth][:, ::-1]
    else:
        windows = np.zeros((ts.size, 0), dtype=xs.dtype)
    hv = np.asarray(h(windows), dtype=np.float64) * np.ones(ts.size)
    d = hv * (probs - (xs[ts] == x))
    N = d.size
    return ConsistencyResult(float(d.mean()), float(d.std(ddof=1) / math.sqrt(N)), int(N), trunc * float(np.abs(hv).max(initial=0.0)))


@dataclass
class WaldResult:
    relative_error: float
    std_error: float
    lhs: float
    rhs: float
    replicas: int

    @property
    def z(self) -> float:
        if self.std_error == 0.0:
            return 0.0 if self.relative_error == 0.0 else math.inf
        return abs(self.relative_error) / self.std_error

    def to_dict(self) -> dict:
        return asdict(self)


def wald_check(replicas: Sequence[BlockSet], n: int, min_replicas: int = MIN_REPLICAS) -> WaldResult:
    """Compare ``E (sum_{k <= i(n)+1} xi_k)**2`` with ``E(xi**2) E(i(n) + 1)`` across replicas.

    Each block set must come from a run longer than ``n`` so that block
    ``i(n) + 1`` (the first starting at or after ``n``) is complete. The
    standard error is a leave-one-replica-out jackknife.
    """
    R = len(replicas)
    if R < min_replicas:
        raise InsufficientData(f"need at least {min_replicas} replicas, have {R}")
    A = np.empty(R)
    tau = np.empty(R)
    sq_sum = np.empty(R)
    cnt = np.empty(R)
    for i, bs in enumerate(replicas):
        renewals = np.concatenate((bs.starts, bs.ends[-1:]))
        i_n = int(np.count_nonzero(renewals < n))
        k = i_n + 1
        if len(bs.xi) < k:
            raise InsufficientData(f"replica {i} has {len(bs.xi)} complete blocks, needs {k}")
        A[i] = float(np.sum(bs.xi[:k])) ** 2
        tau[i] = k
        sq_sum[i] = float(np.sum(bs.xi**2))
        cnt[i] = len(bs.xi)

    def rel(mask=None):
        if mask is None:
            a, t, s, c = A, tau, sq_sum, cnt
        else:
            a, t, s, c = A[mask], tau[mask], sq_sum[mask], cnt[mask]
        lhs = float(a.mean())
        rhs = float(s.sum() / c.sum()) * float(t.mean())
        if rhs == 0.0:
            return (0.0 if lhs == 0.0 else math.inf), lhs, rhs
        return (lhs - rhs) / rhs, lhs, rhs

    value, lhs, rhs = rel()
    jack = np.empty(R)
    mask = np.ones(R, dtype=bool)
    for i in range(R):
        mask[i] = False
        jack[i] = rel(mask)[0]
        mask[i] = True
    se = float(math.sqrt((R - 1) / R * np.sum((jack - jack.mean()) ** 2))) if np.all(np.isfinite(jack)) else math.inf
    return WaldResult(value, se, lhs, rhs, R)


def mean_zero_blocks(blocks, threshold: float = 3.0) -> tuple[bool, float]:
    """Whether the mean block sum is within ``threshold`` standard errors of zero."""
    bs = _as_blockset(blocks)
    xi = np.asarray(bs.xi, dtype=np.float64)
    if xi.size < 2:
        raise InsufficientData("need at least two blocks")
    se = float(xi.std(ddof=1) / math.sqrt(xi.size))
    mean = float(xi.mean())
    z = abs(mean) / se if se > 0 else (0.0 if mean == 0.0 else math.inf)
    return z <= threshold, z
