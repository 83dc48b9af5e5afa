"""Regenerative sampling of binary g-chains.

Every time step consumes exactly one uniform ``U_t``. The symbol is chosen by
locating ``U_t`` in a nested partition of ``[0, 1)``: layer ``k`` adds, for
``-1`` then ``+1``, the increase of the lower envelope ``alpha_k(x | window)``
over the previous layer. A step therefore looks back exactly as far as the
layer its uniform falls in, and whenever ``U_t < a_k`` it looks back at most
``k`` symbols.

A time ``t`` is a confirmed renewal when ``U_{t+j} < a_j`` for every ``j`` up
to the end of the run and at least ``margin`` steps remain. No step at or
after ``t`` then consults anything before ``t``, so the stretches between
confirmed renewals are functions of disjoint sets of uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from . import _backend
from .errors import CertificationError, InsufficientData, ModelError, ThresholdOverflow
from .kernel import (
    MarkovOrder1,
    ModelSpec,
    a_lower_sequence,
    as_window,
    decay_class,
    is_linear,
    uses_logistic,
)
from .renewal import log_product_tail

BIAS_TOLERANCE_DEFAULT = 1e-6


class UniformStream:
    """Reproducible uniform variates keyed by ``(seed, replica_id, substream)``.

    Distinct replica ids (or substreams) spawn statistically independent PCG64
    streams from the same seed.
    """

    def __init__(self, seed: int, replica_id: int = 0, substream: int = 0):
        if seed < 0 or replica_id < 0 or substream < 0:
            raise ValueError("seed, replica_id and substream must be non-negative")
        self.seed = int(seed)
        self.replica_id = int(replica_id)
        self.substream = int(substream)
        self.position = 0
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.replica_id, self.substream))
        self._rng = np.random.Generator(np.random.PCG64(ss))

    def draw(self, count: int) -> np.ndarray:
        out = self._rng.random(int(count))
        self.position += int(count)
        return out

    def __repr__(self) -> str:
        return (
            f"UniformStream(seed={self.seed}, replica_id={self.replica_id}, "
            f"substream={self.substream}, position={self.position})"
        )


@dataclass
class Trajectory:
    symbols: np.ndarray
    renewal_indices: np.ndarray
    lookbacks: np.ndarray
    horizon_margin: int
    bias_bound: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.symbols)

    def gaps(self) -> np.ndarray:
        """Lengths of complete blocks between consecutive confirmed renewals."""
        return np.diff(self.renewal_indices)

    def is_renewal(self) -> np.ndarray:
        flags = np.zeros(self.n, dtype=bool)
        flags[self.renewal_indices] = True
        return flags


@dataclass(frozen=True)
class Block:
    start: int
    end: int
    xi: float

    @property
    def gap(self) -> int:
        return self.end - self.start


@dataclass
class BlockSet:
    """Complete blocks ``[T_k, T_{k+1})`` plus the two boundary partial sums.

    ``head_sum`` covers ``[0, T_1)`` and ``tail_sum`` covers ``[T_{i(n)}, n)``.
    """

    starts: np.ndarray
    ends: np.ndarray
    xi: np.ndarray
    i_n: int
    head_sum: float
    tail_sum: float
    n: int

    @property
    def gaps(self) -> np.ndarray:
        return self.ends - self.starts

    def __len__(self) -> int:
        return len(self.starts)

    def __iter__(self) -> Iterator[Block]:
        for s, e, x in zip(self.starts.tolist(), self.ends.tolist(), self.xi.tolist()):
            yield Block(s, e, x)

    def total(self) -> float:
        return math.fsum([self.head_sum, *self.xi.tolist(), self.tail_sum])


# ---------------------------------------------------------------------------
# single-step sampling


def sample_symbol(model: ModelSpec, window, u: float) -> tuple[int, int]:
    """Symbol selected by ``u`` in the layered partition, and the layer it fell in.

    ``window`` is the history back to the previous confirmed renewal (most
    recent first). Raises :class:`ThresholdOverflow` if ``u`` lies beyond the
    mass reachable with that history.
    """
    window = as_window(window)
    if not 0.0 <= u < 1.0:
        raise ModelError("u must lie in [0, 1)")
    k_max = len(window)
    if isinstance(model, MarkovOrder1):
        m = model.matrix
        lo_m = min(m[0][0], m[1][0])
        lo_p = min(m[0][1], m[1][1])
        base = lo_m + lo_p
        if u < lo_m:
            return -1, 0
        if u < base:
            return 1, 0
        if k_max == 0:
            raise ThresholdOverflow("uniform exceeds layer-0 mass and no history is available")
        row = m[0 if window[0] < 0 else 1]
        return (-1 if u < base + (row[0] - lo_m) else 1), 1
    q = model.link
    w = model.weights(k_max)
    tl = model.logit_tails(k_max)
    s = model.offset
    r = float(tl[0])
    lo_m = q(-s - r)
    lo_p = q(s - r)
    if u < lo_m:
        return -1, 0
    b = lo_m + lo_p
    if r == 0.0:
        b = 1.0
    if u < b:
        return 1, 0
    hist = window.tolist()
    for k in range(1, k_max + 1):
        s += w[k] * hist[k - 1]
        r = float(tl[k])
        nm = max(q(-s - r), lo_m)
        npl = max(q(s - r), lo_p)
        a = b + (nm - lo_m)
        if u < a:
            return -1, k
        b = a + (npl - lo_p)
        if r == 0.0:
            b = 1.0
        if u < b:
            return 1, k
        lo_m, lo_p = nm, npl
    raise ThresholdOverflow(f"uniform {u!r} exceeds the envelope mass at lookback {k_max}")


def layer_partition(model: ModelSpec, window, x: int) -> float:
    """Total length assigned to ``x`` by the layered partition for a fully known window.

    For a model whose memory fits in ``window`` this equals ``g(x | window)``.
    """
    window = as_window(window)
    if isinstance(model, MarkovOrder1):
        m = model.matrix
        col = 0 if x < 0 else 1
        lo = min(m[0][col], m[1][col])
        if len(window) == 0:
            return lo
        return lo + (m[0 if window[0] < 0 else 1][col] - lo)
    q = model.link
    k_max = len(window)
    w = model.weights(k_max)
    tl = model.logit_tails(k_max)
    s = model.offset
    lo = q(-s - float(tl[0])) if x < 0 else q(s - float(tl[0]))
    total = lo
    hist = window.tolist()
    for k in range(1, k_max + 1):
        s += w[k] * hist[k - 1]
        r = float(tl[k])
        nxt = q(-s - r) if x < 0 else q(s - r)
        nxt = max(nxt, lo)
        total += nxt - lo
        lo = nxt
    return total


# ---------------------------------------------------------------------------
# renewal detection


def _bias_from_array(a: np.ndarray, margin: int) -> float:
    seg = a[margin:]
    if seg.size == 0:
        return 0.0
    if np.any(seg <= 0.0):
        return 1.0
    return float(-np.expm1(np.sum(np.log(seg))))


def detect_renewals(
    uniforms: Sequence[float],
    a_lower: Sequence[float],
    margin: int,
    horizon: int | None = None,
) -> tuple[np.ndarray, float]:
    """Indices ``t`` with ``U_{t+j} < a_lower[j]`` for all checked ``j`` and ``n - 1 - t >= margin``.

    ``a_lower`` is made non-decreasing by a running maximum and padded with
    its last entry. The returned bias bound is ``1 - prod_{k >= margin} a_lower[k]``
    over the supplied entries.
    """
    u = np.asarray(uniforms, dtype=np.float64)
    n = u.size
    if margin < 0:
        raise ValueError("margin must be non-negative")
    a = np.maximum.accumulate(np.asarray(a_lower, dtype=np.float64))
    if a.size < n:
        a = np.concatenate((a, np.full(n - a.size, a[-1] if a.size else 0.0)))
    bias = _bias_from_array(a, margin)
    if n == 0:
        return np.zeros(0, dtype=np.int64), bias
    # first j with a[j] > U_s; U_s < a[j] iff j >= need[s]
    need = np.searchsorted(a, u, side="right").astype(np.int64)
    need[need >= a.size] = n + 1
    reach = np.arange(n, dtype=np.int64) - need
    if horizon is None:
        lowest = np.minimum.accumulate(reach[::-1])[::-1]
    else:
        h = int(horizon)
        padded = np.concatenate((reach, np.full(h, np.iinfo(np.int64).max)))
        lowest = np.lib.stride_tricks.sliding_window_view(padded, h + 1).min(axis=1)
    t = np.arange(n, dtype=np.int64)
    ok = (lowest >= t) & (n - 1 - t >= margin)
    return np.flatnonzero(ok).astype(np.int64), bias


def _neglog_suffix(a_lower: np.ndarray, decay, n: int) -> np.ndarray:
    """``-log prod_{k >= m} a_k`` for ``m = 0..n+1``, with the certified tail beyond ``n``."""
    with np.errstate(divide="ignore"):
        neglog = -np.log(a_lower[: n + 1])
    tail = log_product_tail(a_lower, n + 1, decay)
    suffix = np.concatenate((np.cumsum(neglog[::-1])[::-1], [0.0])) + tail
    return suffix


def certify(model: ModelSpec, depth: int = 4096) -> float:
    """Certified lower bound on ``prod_k a_k``; zero when the product cannot be certified."""
    a = a_lower_sequence(model, depth)
    s = _neglog_suffix(a, decay_class(model), depth)[0]
    return 0.0 if not math.isfinite(s) else math.exp(-s)


def choose_margin(model: ModelSpec, n: int, tolerance: float = BIAS_TOLERANCE_DEFAULT) -> tuple[int, float]:
    """Smallest margin whose certified false-renewal bound is within ``tolerance``."""
    a = a_lower_sequence(model, n)
    suffix = _neglog_suffix(a, decay_class(model), n)
    bias = -np.expm1(-suffix)
    ok = np.flatnonzero(bias[1:] <= tolerance)
    if ok.size == 0:
        return n, float(bias[n])
    m = int(ok[0]) + 1
    return m, float(bias[m])


def _kernel_sample(model: ModelSpec, u: np.ndarray, backend: str | None):
    kern = _backend.get(backend)
    n = len(u)
    if isinstance(model, MarkovOrder1):
        return kern.sample_markov(u, model.matrix)
    depth = max(n, 1)
    q = None if uses_logistic(model) else model.link.q
    return kern.sample_linear(u, model.offset, model.weights(depth), model.logit_tails(depth), q)


def simulate(
    model: ModelSpec,
    n: int,
    stream: UniformStream,
    margin: int | None = None,
    bias_tolerance: float = BIAS_TOLERANCE_DEFAULT,
    allow_uncertified: bool = False,
    backend: str | None = None,
) -> Trajectory:
    """Sample ``n`` symbols and mark the confirmed renewals.

    With ``margin=None`` the smallest margin meeting ``bias_tolerance`` is used.
    Steps before the first confirmed renewal may resolve against a free
    boundary (lookback ``t + 1``); they only enter the head boundary term.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a = a_lower_sequence(model, n)
    suffix = _neglog_suffix(a, decay_class(model), n)
    if not math.isfinite(suffix[0]) and not allow_uncertified:
        raise CertificationError("product_zero: prod a_k > 0 cannot be certified for this model")
    if margin is None:
        ok = np.flatnonzero(-np.expm1(-suffix[1:]) <= bias_tolerance)
        margin = int(ok[0]) + 1 if ok.size else n
    if margin < 1:
        raise ValueError("margin must be >= 1")
    if margin <= n + 1:
        bias = float(-np.expm1(-suffix[margin]))
    else:
        bias = float(-np.expm1(-log_product_tail(a, margin, decay_class(model))))
    u = stream.draw(n)
    symbols, lookbacks = _kernel_sample(model, u, backend)
    renewals, _ = detect_renewals(u, a, margin)
    _check_containment(renewals, lookbacks)
    return Trajectory(
        symbols=symbols,
        renewal_indices=renewals,
        lookbacks=lookbacks,
        horizon_margin=int(margin),
        bias_bound=bias,
        meta={
            "seed": stream.seed,
            "replica_id": stream.replica_id,
            "substream": stream.substream,
            "backend": _backend.get(backend).BACKEND,
        },
    )


def _check_containment(renewals: np.ndarray, lookbacks: np.ndarray) -> None:
    if renewals.size == 0:
        return
    t = np.arange(renewals[0], len(lookbacks))
    prev = renewals[np.searchsorted(renewals, t, side="right") - 1]
    bad = np.flatnonzero(lookbacks[t] > t - prev)
    if bad.size:
        i = int(t[bad[0]])
        raise ThresholdOverflow(
            f"step {i} looked back {int(lookbacks[i])} past the renewal at {int(prev[bad[0]])}"
        )


def lookback_containment(traj: Trajectory) -> bool:
    try:
        _check_containment(traj.renewal_indices, traj.lookbacks)
    except ThresholdOverflow:
        return False
    return True


# ---------------------------------------------------------------------------
# blocks


def observable_values(f, symbols: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` on a symbol array; ``f`` is a mapping, a callable or an object with ``values``."""
    vals = f if isinstance(f, Mapping) else getattr(f, "values", f)
    if isinstance(vals, Mapping):
        fm, fp = float(vals[-1]), float(vals[1])
    elif callable(vals):
        fm, fp = float(vals(-1)), float(vals(1))
    else:
        fm, fp = (float(v) for v in vals)
    return np.where(np.asarray(symbols) > 0, fp, fm)


def i_of_n(renewals: Sequence[int], n: int) -> int:
    """``max{k >= 1 : T_k < n}``, or 0 when no renewal falls in ``[1, n)``."""
    r = np.asarray(renewals, dtype=np.int64)
    return int(np.count_nonzero((r >= 1) & (r < n)))


def extract_blocks(traj: Trajectory, f) -> BlockSet:
    """Complete blocks between confirmed renewals, ``i(n)`` and the boundary sums."""
    n = traj.n
    r = np.asarray(traj.renewal_indices, dtype=np.int64)
    T = r[(r >= 1) & (r < n)]
    if T.size < 2:
        raise InsufficientData(
            f"need at least 2 confirmed renewals in [1, n), found {T.size} "
            f"(n={n}, confirmation margin {traj.horizon_margin})"
        )
    vals = observable_values(f, traj.symbols)
    starts = T[:-1]
    ends = T[1:]
    xi = np.add.reduceat(vals[T[0] : T[-1]], starts - T[0]) if starts.size else np.zeros(0)
    head = math.fsum(vals[: T[0]].tolist())
    tail = math.fsum(vals[T[-1] :].tolist())
    return BlockSet(starts, ends, xi, int(T.size), head, tail, n)


def merge_blocks(sets: Sequence[BlockSet]) -> BlockSet:
    """Concatenate block sets from independent replicas (boundary sums are added)."""
    if not sets:
        raise InsufficientData("no block sets to merge")
    return BlockSet(
        np.concatenate([b.starts for b in sets]),
        np.concatenate([b.ends for b in sets]),
        np.concatenate([b.xi for b in sets]),
        sum(b.i_n for b in sets),
        math.fsum(b.head_sum for b in sets),
        math.fsum(b.tail_sum for b in sets),
        sum(b.n for b in sets),
    )


# ---------------------------------------------------------------------------
# approximate oracle


def truncated_sampler(
    model: ModelSpec,
    n: int,
    burn_in: int,
    window_cap: int,
    stream: UniformStream,
    backend: str | None = None,
) -> Trajectory:
    """Approximate sampler using the envelope midpoint at depth ``min(t, window_cap)``.

    Generates ``burn_in + n`` steps and keeps the last ``n``. The per-step
    approximation error is at most ``meta["max_half_width"]``.
    """
    if window_cap < 1:
        raise ValueError("window_cap must be >= 1")
    if n < 1 or burn_in < 0:
        raise ValueError("n must be >= 1 and burn_in >= 0")
    total = n + burn_in
    u = stream.draw(total)
    kern = _backend.get(backend)
    if isinstance(model, MarkovOrder1):
        symbols, _ = kern.sample_markov(u, model.matrix)
        worst = 0.0
    else:
        depth = min(window_cap, total)
        q = None if uses_logistic(model) else model.link.q
        symbols, worst = kern.truncated_linear(
            u, model.offset, model.weights(depth), model.logit_tails(depth), depth, q
        )
    t = np.arange(burn_in, total)
    return Trajectory(
        symbols=symbols[burn_in:],
        renewal_indices=np.zeros(0, dtype=np.int64),
        lookbacks=np.minimum(t, window_cap),
        horizon_margin=0,
        bias_bound=math.nan,
        meta={
            "seed": stream.seed,
            "replica_id": stream.replica_id,
            "substream": stream.substream,
            "max_half_width": float(worst),
            "window_cap": int(window_cap),
            "burn_in": int(burn_in),
        },
    )
