"""Binary g-function models and their certified conditional-probability envelopes.

Three model families are provided:

* :class:`Autoregressive` -- ``g(+1 | past) = q(theta0 + sum_k theta_k x_{-k})``
  for a monotone link ``q`` (logistic by default);
* :class:`Ising` -- the power-law Ising chain with couplings ``beta / k**p``;
* :class:`MarkovOrder1` -- an order-1 chain, used as a brute-force oracle.

Histories are passed most-recent-first: ``window[0]`` is ``x_{-1}``.

The first two families share a *linear-link* structure: the conditional
probability of ``+1`` is ``link.q(offset + sum_j w_j x_{-j})``. Everything that
depends on the unseen part of the past is summarised by ``logit_tails(depth)``,
the sequence ``R_k >= sum_{j>k} |w_j|`` of tail bounds on the argument scale.
Tails are evaluated with the Hurwitz zeta function and inflated by a relative
``1e-12`` so that floating point rounding never makes an envelope too narrow.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, NamedTuple, Sequence, Union

import numpy as np
from scipy.special import expit, zeta

from ._kernels_py import logistic
from .errors import ModelError, PreconditionError

MINUS = -1
PLUS = 1
SYMBOLS = (MINUS, PLUS)
K_SCAN_MAX = 20

_TAIL_INFLATION = 1.0 + 1e-12
# Detection thresholds sit this far below the envelope mass they certify, so a
# rounding difference between closed-form and kernel arithmetic cannot let a
# uniform slip past a confirmed renewal.
_DETECTION_SLACK = 1e-12


@dataclass(frozen=True)
class Link:
    """Strictly increasing C^1 map from the reals into (0, 1).

    ``qprime_sup`` must bound ``|q'|`` everywhere; registering a link is an
    attestation of monotonicity by the caller.
    """

    name: str
    q: Callable[[float], float]
    qprime_sup: float
    vectorized: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x: float) -> float:
        return self.q(x)

    def many(self, x: np.ndarray) -> np.ndarray:
        if self.vectorized is not None:
            return self.vectorized(x)
        return np.array([self.q(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))


LOGISTIC = Link("logistic", logistic, 0.25, expit)


def uses_logistic(model) -> bool:
    """Whether ``model`` uses the built-in logistic link.

    Compared by value rather than identity so that models unpickled in worker
    processes take the same closed-form and compiled paths as the originals.
    """
    return getattr(model, "link", None) == LOGISTIC


class ProbEnvelope(NamedTuple):
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


class PowerTail(NamedTuple):
    """Bound ``const * log(k)**log_exp / k**pow_exp`` holding for ``k >= threshold``.

    ``pow_exp == inf`` encodes a quantity that vanishes for ``k >= threshold``.
    """

    const: float
    log_exp: float
    pow_exp: float
    threshold: int

    @property
    def finite(self) -> bool:
        return math.isinf(self.pow_exp)

    def __call__(self, k: float) -> float:
        if self.finite:
            return 0.0
        return self.const * math.log(k) ** self.log_exp / k**self.pow_exp


@dataclass(frozen=True)
class KBound:
    """A value of ``a_k`` or ``var_k`` tagged with how it was obtained."""

    value: float
    mode: str
    clamped: bool = False


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ModelError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Autoregressive:
    """Binary autoregressive chain.

    ``theta`` holds the explicit coefficients ``theta_1..theta_L``. Lags beyond
    ``L`` carry ``tail_coef * m**-tail_power`` (set ``tail_coef=0`` for a finite
    order model).
    """

    theta0: float = 0.0
    theta: tuple[float, ...] = ()
    tail_coef: float = 0.0
    tail_power: float = 2.0
    link: Link = LOGISTIC
    truncation: int = 256
    k_scan_max: int = K_SCAN_MAX

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(_check_finite("theta", v) for v in self.theta))
        _check_finite("theta0", self.theta0)
        _check_finite("tail_coef", self.tail_coef)
        if self.tail_coef != 0.0 and not self.tail_power > 1.0:
            raise ModelError("tail_power must exceed 1 for a summable coefficient tail")
        if not 0.0 < self.link.qprime_sup < math.inf:
            raise ModelError("link.qprime_sup must be positive and finite")
        if self.truncation < 1 or self.k_scan_max < 0:
            raise ModelError("truncation must be >= 1 and k_scan_max >= 0")

    variant = "autoregressive"

    @property
    def offset(self) -> float:
        return float(self.theta0)

    @property
    def order(self) -> int:
        return len(self.theta)

    def weights(self, depth: int) -> np.ndarray:
        return _linear_arrays(self, int(depth))[0]

    def logit_tails(self, depth: int) -> np.ndarray:
        return _linear_arrays(self, int(depth))[1]

    def r(self, k: int) -> float:
        """Exact ``r_k = sum_{m>k} |theta_m|``."""
        return float(_ar_tail_sums(self, np.array([k]))[0])

    def params(self) -> dict:
        return {
            "variant": self.variant,
            "theta0": self.theta0,
            "theta": list(self.theta),
            "tail_coef": self.tail_coef,
            "tail_power": self.tail_power,
            "link": self.link.name,
            "qprime_sup": self.link.qprime_sup,
            "truncation": self.truncation,
            "k_scan_max": self.k_scan_max,
        }


@dataclass(frozen=True)
class Ising:
    """Power-law Ising chain: ``g(+1 | past) = 1 / (1 + exp(-2 beta sum_k k**-p x_{-k}))``."""

    beta: float
    p: float
    truncation: int = 256
    k_scan_max: int = K_SCAN_MAX

    def __post_init__(self):
        _check_finite("beta", self.beta)
        _check_finite("p", self.p)
        if not self.beta > 0.0:
            raise ModelError("beta must be positive")
        if not self.p > 1.0:
            raise ModelError("p must exceed 1")
        if self.truncation < 1 or self.k_scan_max < 0:
            raise ModelError("truncation must be >= 1 and k_scan_max >= 0")

    variant = "ising"
    offset = 0.0
    link = LOGISTIC

    def weights(self, depth: int) -> np.ndarray:
        return _linear_arrays(self, int(depth))[0]

    def logit_tails(self, depth: int) -> np.ndarray:
        return _linear_arrays(self, int(depth))[1]

    def params(self) -> dict:
        return {
            "variant": self.variant,
            "beta": self.beta,
            "p": self.p,
            "truncation": self.truncation,
            "k_scan_max": self.k_scan_max,
        }


@dataclass(frozen=True)
class MarkovOrder1:
    """Order-1 chain; ``matrix[i][j]`` = P(next = j | previous = i), index 0 is -1."""

    matrix: tuple[tuple[float, float], tuple[float, float]]
    k_scan_max: int = K_SCAN_MAX
    truncation: int = 1

    def __post_init__(self):
        rows = tuple(tuple(_check_finite("matrix", v) for v in row) for row in self.matrix)
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise ModelError("matrix must be 2x2")
        for row in rows:
            if min(row) < 0.0 or max(row) > 1.0 or abs(row[0] + row[1] - 1.0) > 1e-12:
                raise ModelError(f"matrix rows must be probability vectors, got {row}")
        object.__setattr__(self, "matrix", rows)

    variant = "markov1"

    def params(self) -> dict:
        return {"variant": self.variant, "matrix": [list(r) for r in self.matrix]}


ModelSpec = Union[Autoregressive, Ising, MarkovOrder1]
LinearModel = Union[Autoregressive, Ising]


def memoryless(p_plus: float = 0.5) -> MarkovOrder1:
    """I.i.d. symbols with P(+1) = ``p_plus``."""
    row = (1.0 - p_plus, p_plus)
    return MarkovOrder1((row, row))


def symmetric_markov(stay: float) -> MarkovOrder1:
    return MarkovOrder1(((stay, 1.0 - stay), (1.0 - stay, stay)))


def is_linear(model: ModelSpec) -> bool:
    return isinstance(model, (Autoregressive, Ising))


def model_hash(model: ModelSpec) -> str:
    blob = json.dumps(model.params(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# coefficient and tail arrays


def _ar_tail_sums(model: Autoregressive, ks: np.ndarray) -> np.ndarray:
    ks = np.asarray(ks, dtype=np.int64)
    L = model.order
    abs_theta = np.abs(np.asarray(model.theta, dtype=np.float64))
    # suffix[k] = sum_{k < m <= L} |theta_m|
    suffix = np.concatenate((np.cumsum(abs_theta[::-1])[::-1], [0.0]))
    out = suffix[np.minimum(ks, L)]
    if model.tail_coef != 0.0:
        start = np.maximum(ks, L) + 1.0
        out = out + abs(model.tail_coef) * zeta(model.tail_power, start)
    return out


@lru_cache(maxsize=16)
def _linear_arrays(model: LinearModel, depth: int) -> tuple[np.ndarray, np.ndarray]:
    if depth < 0:
        raise ModelError("depth must be non-negative")
    j = np.arange(depth + 1, dtype=np.float64)
    ks = np.arange(depth + 1)
    if isinstance(model, Ising):
        w = np.zeros(depth + 1)
        w[1:] = 2.0 * model.beta * j[1:] ** (-model.p)
        tails = 2.0 * model.beta * zeta(model.p, ks + 1.0)
    else:
        w = np.zeros(depth + 1)
        L = min(model.order, depth)
        w[1 : L + 1] = model.theta[:L]
        if model.tail_coef != 0.0 and depth > model.order:
            w[model.order + 1 :] = model.tail_coef * j[model.order + 1 :] ** (-model.tail_power)
        tails = _ar_tail_sums(model, ks)
    tails = tails * _TAIL_INFLATION
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(tails))):
        raise ModelError("non-finite coefficient or tail value; check the model parameters")
    w.setflags(write=False)
    tails.setflags(write=False)
    return w, tails


# ---------------------------------------------------------------------------
# envelopes


def as_window(window: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(window, dtype=np.int64).reshape(-1)
    if arr.size and not np.all((arr == -1) | (arr == 1)):
        raise ModelError("history symbols must be -1 or +1")
    return arr


def check_symbol(x: int) -> int:
    if x not in (-1, 1):
        raise ModelError(f"symbol must be -1 or +1, got {x!r}")
    return int(x)


def linear_argument(model: LinearModel, window: np.ndarray) -> float:
    """``offset + sum_j w_j x_{-j}``, accumulated lag by lag as the samplers do."""
    w = model.weights(len(window))
    s = model.offset
    for j, x in enumerate(window.tolist(), start=1):
        s += w[j] * x
    return s


def conditional_prob_envelope(model: ModelSpec, x: int, window) -> ProbEnvelope:
    """Infimum and supremum of ``g(x | window, tail)`` over all tail extensions."""
    x = check_symbol(x)
    window = as_window(window)
    k = len(window)
    if isinstance(model, MarkovOrder1):
        col = 0 if x < 0 else 1
        if k == 0:
            vals = (model.matrix[0][col], model.matrix[1][col])
            return ProbEnvelope(min(vals), max(vals))
        v = model.matrix[0 if window[0] < 0 else 1][col]
        return ProbEnvelope(v, v)
    s = linear_argument(model, window)
    r = float(model.logit_tails(k)[k])
    q = model.link
    if x > 0:
        lo, hi = q(s - r), q(s + r)
    else:
        lo, hi = q(-s - r), q(-s + r)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ModelError("non-finite conditional probability")
    return ProbEnvelope(lo, hi)


def g_midpoint(model: ModelSpec, x: int, window) -> float:
    env = conditional_prob_envelope(model, x, window)
    return 0.5 * (env.lower + env.upper)


# ---------------------------------------------------------------------------
# minorization and variation


def _scan_width(model: ModelSpec, k: int) -> float:
    if isinstance(model, MarkovOrder1):
        if k >= 1:
            return 0.0
        m = model.matrix
        return max(abs(m[0][0] - m[1][0]), abs(m[0][1] - m[1][1]))
    w = model.weights(k)
    s = np.array([model.offset])
    for j in range(1, k + 1):
        s = np.concatenate((s + w[j], s - w[j]))
    r = float(model.logit_tails(k)[k])
    q = model.link
    return float(np.max(q.many(s + r) - q.many(s - r)))


def _certified_variation(model: ModelSpec, k: int) -> float:
    if isinstance(model, MarkovOrder1):
        return _scan_width(model, k)
    if isinstance(model, Ising):
        if k == 0:
            return math.tanh(0.5 * float(model.logit_tails(0)[0]))
        return 2.0 * model.beta * _ising_factor(model.p) * k ** (1.0 - model.p)
    return 2.0 * model.link.qprime_sup * float(model.logit_tails(k)[k])


def _ising_factor(p: float) -> float:
    # sum_{j>k} j^-p <= k^(1-p)/(p-1); the plain 2 beta k^(1-p) form needs p >= 3/2.
    return max(1.0, 1.0 / (2.0 * (p - 1.0)))


def a_k_uniform(model: ModelSpec, k: int, mode: str = "certified_bound") -> KBound:
    """Lower bound on the minorization coefficient ``a_k``.

    ``exact_scan`` enumerates all ``2**k`` windows and returns ``1 - var_k``;
    ``certified_bound`` uses the closed-form decay of the variation.
    """
    if k < 0:
        raise PreconditionError("k must be non-negative")
    if mode == "exact_scan":
        if k > model.k_scan_max:
            raise PreconditionError(f"exact_scan limited to k <= {model.k_scan_max}")
        return KBound(1.0 - _scan_width(model, k), mode)
    if mode != "certified_bound":
        raise ValueError(f"unknown mode {mode!r}")
    raw = 1.0 - _certified_variation(model, k)
    value = min(1.0, max(0.0, raw))
    return KBound(value, mode, clamped=value != raw)


def var_k(model: ModelSpec, k: int) -> KBound:
    """Variation at depth ``k``: exact by enumeration up to ``k_scan_max``, else a certified upper bound."""
    if k < 0:
        raise PreconditionError("k must be non-negative")
    if k <= model.k_scan_max:
        return KBound(_scan_width(model, k), "exact_scan")
    raw = _certified_variation(model, k)
    return KBound(min(1.0, raw), "certified_bound", clamped=raw > 1.0)


def variation_tail(model: ModelSpec) -> PowerTail:
    """Power-law envelope of ``var_k`` (equivalently of ``1 - a_k``)."""
    if isinstance(model, MarkovOrder1):
        return PowerTail(1.0, 0.0, math.inf, 1)
    if isinstance(model, Ising):
        return PowerTail(2.0 * model.beta * _ising_factor(model.p), 0.0, model.p - 1.0, 1)
    threshold = max(model.order, 1)
    if model.tail_coef == 0.0:
        return PowerTail(1.0, 0.0, math.inf, threshold)
    s = model.tail_power
    const = 2.0 * model.link.qprime_sup * abs(model.tail_coef) / (s - 1.0) * _TAIL_INFLATION
    return PowerTail(const, 0.0, s - 1.0, threshold)


def decay_class(model: ModelSpec):
    """The model's :class:`~gchains.renewal.DecayClass`, or ``None`` when the decay is slower than ``1/k``."""
    from .renewal import DecayClass

    tail = variation_tail(model)
    if tail.pow_exp < 1.0:
        return None
    return DecayClass(tail.log_exp, tail.pow_exp, tail.const, max(2, tail.threshold))


def model_regime(model: ModelSpec) -> str:
    from .renewal import classify_decay

    d = decay_class(model)
    return "none" if d is None else classify_decay(d)


def _tail_summable(tail: PowerTail, power: float = 1.0) -> bool:
    b = tail.pow_exp * power
    a = tail.log_exp * power
    return tail.finite or b > 1.0 or (b == 1.0 and a < -1.0)


def uniqueness_class(model: ModelSpec) -> str:
    """Which sufficient condition for a unique consistent measure the model's bounds certify."""
    tail = variation_tail(model)
    if _tail_summable(tail):
        return "positive_product"
    if _tail_summable(tail, power=2.0):
        return "square_summable_variation"
    return "none_detected"


def a_lower_sequence(model: ModelSpec, depth: int) -> np.ndarray:
    """Tightest certified lower bounds on ``a_0..a_depth`` matching the samplers' envelopes.

    Every entry is at most the envelope mass the sampler accumulates by that
    layer for any realised window, and the sequence is made non-decreasing by a
    running maximum.
    """
    if isinstance(model, MarkovOrder1):
        out = np.ones(depth + 1)
        m = model.matrix
        out[0] = min(m[0][0], m[1][0]) + min(m[0][1], m[1][1])
        return np.minimum(out, 1.0)
    tails = np.asarray(model.logit_tails(depth))
    if uses_logistic(model):
        width = np.tanh(0.5 * tails)
    else:
        width = np.minimum(1.0, 2.0 * model.link.qprime_sup * tails)
    out = 1.0 - width - np.where(tails > 0.0, _DETECTION_SLACK, 0.0)
    out = np.clip(out, 0.0, 1.0)
    return np.maximum.accumulate(out)


# ---------------------------------------------------------------------------
# interpolation bound for the Ising potential


def _h_values(h) -> tuple[float, float]:
    if isinstance(h, Mapping):
        return float(h[-1]), float(h[1])
    return float(h(-1)), float(h(1))


def check_sim_bound(model: Ising, pairs, h, allowance: bool = True) -> float:
    """Largest ``lhs - rhs - allowance`` over history pairs; non-positive confirms the bound.

    ``lhs = |sum_x h(x) (g(x|omega) - g(x|sigma))|`` and ``rhs`` is
    ``sup|h|`` times the largest change of the summed potential, both evaluated
    with the pairs' histories truncated at their common depth ``L``.
    ``pairs`` has shape ``(P, 2, L)``. With ``allowance`` the unseen tails beyond
    ``L`` are accounted for; without it only a rounding allowance remains.
    """
    if not isinstance(model, Ising):
        raise ModelError("check_sim_bound requires an Ising model")
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1] != 2:
        raise ModelError("pairs must have shape (P, 2, L)")
    if arr.size and not np.all(np.abs(arr) == 1.0):
        raise ModelError("history symbols must be -1 or +1")
    L = arr.shape[2]
    coup = np.arange(1, L + 1, dtype=np.float64) ** (-model.p)
    s_omega = arr[:, 0, :] @ coup
    s_sigma = arr[:, 1, :] @ coup
    hm, hp = _h_values(h)
    dplus = expit(2.0 * model.beta * s_omega) - expit(2.0 * model.beta * s_sigma)
    lhs = np.abs(hp * dplus - hm * dplus)
    hsup = max(abs(hm), abs(hp))
    rhs = hsup * model.beta * np.abs(s_omega - s_sigma)
    slack = 1e-12
    if allowance:
        slack += 4.0 * hsup * model.beta * float(zeta(model.p, L + 1.0))
    if len(lhs) == 0:
        return -slack
    return float(np.max(lhs - rhs) - slack)
