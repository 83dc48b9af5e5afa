"""Experiment configuration: INI files plus command-line overrides.

A config has a ``[model]`` section and an optional ``[experiment]`` section::

    [model]
    variant = ising          ; ising | autoregressive | markov1 | memoryless | a_sequence
    beta = 0.3
    p = 4

    [experiment]
    n = 10000
    replicas = 200
    seed = 7
    observable = identity    ; identity | zero | <f(-1)>,<f(+1)>

Unknown keys are rejected so that typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .errors import ModelError
from .kernel import Autoregressive, Ising, MarkovOrder1, ModelSpec, memoryless, symmetric_markov
from .renewal import DecayClass

_MODEL_KEYS = {
    "ising": {"beta", "p", "truncation", "scan_cutoff"},
    "autoregressive": {"theta0", "theta", "tail_coef", "tail_power", "truncation", "scan_cutoff"},
    "markov1": {"matrix", "stay", "truncation", "scan_cutoff"},
    "memoryless": {"p_plus", "truncation", "scan_cutoff"},
    "a_sequence": {"a", "decay"},
}

_EXPERIMENT_KEYS = {
    "n",
    "replicas",
    "seed",
    "margin",
    "bias_tolerance",
    "min_blocks",
    "min_replicas",
    "max_lag",
    "taper",
    "observable",
    "centering",
    "pilot_n",
    "m_max",
    "sigma",
    "path_grid",
    "out",
    "workers",
    "allow_uncertified",
}


@dataclass(frozen=True)
class ASequence:
    """Stand-in for a model given only by its minorization sequence (renewal and classify only).

    ``a`` lists ``a_0, a_1, ...``; the last value repeats. ``decay`` optionally
    supplies the tail class used for classification.
    """

    a: tuple[float, ...]
    decay: DecayClass | None = None
    variant = "a_sequence"

    def __post_init__(self):
        if not self.a:
            raise ModelError("a_sequence needs at least one value")
        if any(not (0.0 <= v <= 1.0) for v in self.a):
            raise ModelError("a values must lie in [0, 1]")

    def sequence(self, depth: int) -> np.ndarray:
        out = np.full(depth + 1, self.a[-1], dtype=np.float64)
        m = min(len(self.a), depth + 1)
        out[:m] = self.a[:m]
        return out

    def params(self) -> dict:
        d = None if self.decay is None else [self.decay.log_exp, self.decay.pow_exp, self.decay.const, self.decay.threshold]
        return {"variant": self.variant, "a": list(self.a), "decay": d}


AnyModel = Union[ModelSpec, ASequence]


@dataclass(frozen=True)
class ExperimentConfig:
    model: AnyModel
    n: int = 10_000
    replicas: int = 1
    seed: int = 0
    margin: int | None = None
    bias_tolerance: float = 1e-6
    min_blocks: int = 30
    min_replicas: int = 100
    max_lag: int | None = None
    taper: bool = False
    observable: str = "identity"
    centering: str = "auto"
    pilot_n: int | None = None
    m_max: int = 1000
    sigma: float | None = None
    path_grid: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    out: str = "gchains-out"
    workers: int = 1
    allow_uncertified: bool = False
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("n must be >= 1")
        if self.replicas < 1:
            raise ModelError("replicas must be >= 1")
        if self.seed < 0:
            raise ModelError("seed must be non-negative")
        if not 0.0 < self.bias_tolerance < 1.0:
            raise ModelError("bias_tolerance must lie in (0, 1)")
        if self.margin is not None and self.margin < 1:
            raise ModelError("margin must be >= 1")
        if self.max_lag is not None and self.max_lag < 0:
            raise ModelError("max_lag must be non-negative")
        if self.workers < 1:
            raise ModelError("workers must be >= 1")
        if self.centering not in ("auto", "exact", "pilot", "none"):
            raise ModelError("centering must be auto, exact, pilot or none")
        if any(not 0.0 < t <= 1.0 for t in self.path_grid):
            raise ModelError("path_grid points must lie in (0, 1]")
        parse_observable(self.observable)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Return a copy with every non-``None`` keyword applied (flags win over the file)."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return {
            "model": self.model.params(),
            "n": self.n,
            "replicas": self.replicas,
            "seed": self.seed,
            "margin": self.margin,
            "bias_tolerance": self.bias_tolerance,
            "min_blocks": self.min_blocks,
            "min_replicas": self.min_replicas,
            "max_lag": self.max_lag,
            "taper": self.taper,
            "observable": self.observable,
            "centering": self.centering,
            "pilot_n": self.pilot_n,
            "m_max": self.m_max,
            "sigma": self.sigma,
            "path_grid": list(self.path_grid),
        }


def parse_observable(text: str) -> tuple[str, tuple[float, float]]:
    """Map ``identity``, ``zero`` or ``"<f(-1)>,<f(+1)>"`` to a kind and its two values."""
    t = text.strip().lower()
    if t == "identity":
        return "identity", (-1.0, 1.0)
    if t == "zero":
        return "zero", (0.0, 0.0)
    parts = [p.strip() for p in t.split(",")]
    if len(parts) != 2:
        raise ModelError(f"observable must be identity, zero or two comma-separated values, got {text!r}")
    try:
        vals = (float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise ModelError(f"bad observable values {text!r}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise ModelError("observable values must be finite")
    return "values", vals


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError as exc:
        raise ModelError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("auto", "none", "") else int(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ModelError(f"expected a boolean, got {text!r}")


def model_from_mapping(sec: Mapping[str, str]) -> AnyModel:
    """Build a model from ``[model]`` key-value strings."""
    variant = sec.get("variant", "").strip().lower()
    if variant not in _MODEL_KEYS:
        raise ModelError(f"unknown model variant {variant!r}; expected one of {sorted(_MODEL_KEYS)}")
    extra = set(sec) - _MODEL_KEYS[variant] - {"variant"}
    if extra:
        raise ModelError(f"unknown keys for {variant}: {sorted(extra)}")
    common = {}
    if "truncation" in sec and variant in ("ising", "autoregressive"):
        common["truncation"] = int(sec["truncation"])
    if "scan_cutoff" in sec and variant != "a_sequence":
        common["k_scan_max"] = int(sec["scan_cutoff"])
    try:
        if variant == "ising":
            return Ising(float(sec["beta"]), float(sec["p"]), **common)
        if variant == "autoregressive":
            return Autoregressive(
                theta0=float(sec.get("theta0", "0")),
                theta=_floats(sec.get("theta", "")),
                tail_coef=float(sec.get("tail_coef", "0")),
                tail_power=float(sec.get("tail_power", "2")),
                **common,
            )
        if variant == "markov1":
            if "stay" in sec:
                m = symmetric_markov(float(sec["stay"]))
            else:
                v = _floats(sec["matrix"])
                if len(v) != 4:
                    raise ModelError("matrix needs four values: p(-|-), p(+|-), p(-|+), p(+|+)")
                m = MarkovOrder1(((v[0], v[1]), (v[2], v[3])))
            return replace(m, **{k: v for k, v in common.items() if k == "k_scan_max"})
        if variant == "memoryless":
            m = memoryless(float(sec.get("p_plus", "0.5")))
            return replace(m, **{k: v for k, v in common.items() if k == "k_scan_max"})
        decay = None
        if "decay" in sec:
            d = _floats(sec["decay"])
            if len(d) not in (3, 4):
                raise ModelError("decay needs log_exp, pow_exp, const[, threshold]")
            decay = DecayClass(d[0], d[1], d[2], int(d[3]) if len(d) == 4 else 2)
        return ASequence(_floats(sec["a"]), decay)
    except KeyError as exc:
        raise ModelError(f"missing model key {exc.args[0]!r} for variant {variant}") from exc


def config_from_parser(cp: configparser.ConfigParser, source: str | None = None) -> ExperimentConfig:
    if not cp.has_section("model"):
        raise ModelError("config needs a [model] section")
    model = model_from_mapping(dict(cp["model"]))
    exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    extra = set(exp) - _EXPERIMENT_KEYS
    if extra:
        raise ModelError(f"unknown [experiment] keys: {sorted(extra)}")
    kw: dict = {}
    try:
        for key in ("n", "replicas", "seed", "min_blocks", "min_replicas", "m_max", "workers"):
            if key in exp:
                kw[key] = int(exp[key])
        for key in ("margin", "max_lag", "pilot_n"):
            if key in exp:
                kw[key] = _opt_int(exp[key])
        if "bias_tolerance" in exp:
            kw["bias_tolerance"] = float(exp["bias_tolerance"])
        if "sigma" in exp:
            kw["sigma"] = None if exp["sigma"].strip().lower() in ("auto", "") else float(exp["sigma"])
        for key in ("taper", "allow_uncertified"):
            if key in exp:
                kw[key] = _bool(exp[key])
        for key in ("observable", "centering", "out"):
            if key in exp:
                kw[key] = exp[key].strip()
        if "path_grid" in exp:
            kw["path_grid"] = _floats(exp["path_grid"])
    except ValueError as exc:
        raise ModelError(f"bad [experiment] value: {exc}") from exc
    return ExperimentConfig(model=model, source=source, **kw)


def load_config(path: str | Path) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ModelError(f"cannot parse {path}: {exc}") from exc
    return config_from_parser(cp, source=str(path))


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ModelError(f"cannot parse config: {exc}") from exc
    return config_from_parser(cp)
