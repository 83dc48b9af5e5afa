"""Replica orchestration and the batch commands behind the CLI.

Every replica draws from ``UniformStream(seed, replica_id)``; workers share
nothing and results are merged in replica-id order, so the worker count never
changes an output byte.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, _backend
from . import clt
from .clt import AutocovStats, ObservableF, VarianceEstimate
from .config import ASequence, ExperimentConfig, parse_observable
from .errors import GChainError, InsufficientData, PreconditionError
from .kernel import (
    Autoregressive,
    Ising,
    MarkovOrder1,
    a_k_uniform,
    a_lower_sequence,
    decay_class,
    model_hash,
    model_regime,
    uniqueness_class,
    var_k,
    variation_tail,
)
from .regen import (
    BlockSet,
    UniformStream,
    certify,
    extract_blocks,
    lookback_containment,
    observable_values,
    simulate,
)
from .renewal import (
    GapLaw,
    classify_decay,
    gap_law_dp,
    gap_law_empirical,
    rho_table,
    size_bias_chi2,
    straddling_gaps,
    summability_checks,
)
from .results import csv_text, dumps, trajectory_csv

RHO_CONVENTION_NOTE = (
    "rho_M is the probability that the house-of-cards chain started at 0 is at 0 after M steps "
    "(any visit, not first passage). The gap columns give P(gap >= M) for the renewals the sampler "
    "detects, from the exact dynamic program and from the simulated trajectories. The two are "
    "offset by one step: P(gap > M) = rho_M, so P(gap >= M) = rho_{M-1} and the mean gap is "
    "1 + sum_{M >= 1} rho_M."
)
GAP_DEPTH = 4096
SUBSTREAM_MAIN = 0
SUBSTREAM_PILOT = 1


# ---------------------------------------------------------------------------
# observables


def stationary_mean(model) -> float | None:
    """``E(X_0)`` when it is known in closed form, else ``None``."""
    if isinstance(model, Ising):
        return 0.0
    if isinstance(model, MarkovOrder1):
        up = model.matrix[0][1]
        down = model.matrix[1][0]
        if up + down == 0.0:
            return None
        return (up - down) / (up + down)
    if isinstance(model, Autoregressive) and model.theta0 == 0.0 and uses_logistic(model):
        return 0.0
    return None


def pilot_mean(model, f: ObservableF, n: int, seed: int) -> tuple[float, float]:
    """Ratio estimate of ``E f(X_0)`` and its standard error from an independent pilot stream."""
    traj = simulate(model, n, UniformStream(seed, 0, SUBSTREAM_PILOT))
    bs = extract_blocks(traj, f)
    xi = np.asarray(bs.xi)
    gaps = np.asarray(bs.gaps, dtype=np.float64)
    mean = float(xi.sum() / gaps.sum())
    resid = xi - mean * gaps
    sigma2 = float(np.mean(resid * resid) / gaps.mean())
    return mean, math.sqrt(sigma2 / gaps.sum())


def resolve_observable(cfg: ExperimentConfig) -> ObservableF:
    """The configured observable with its centering applied.

    ``auto`` centering subtracts the closed-form mean when one exists, uses a
    pilot run otherwise, and leaves explicit ``f(-1),f(+1)`` values untouched.
    """
    kind, (fm, fp) = parse_observable(cfg.observable)
    mode = cfg.centering
    if mode == "auto":
        mode = "none" if kind == "values" else ("exact" if kind == "zero" or stationary_mean(cfg.model) is not None else "pilot")
    if mode == "none":
        return ObservableF(fm, fp, "none")
    if mode == "exact":
        if kind == "identity":
            mu = stationary_mean(cfg.model)
            if mu is None:
                raise PreconditionError("no closed-form mean for this model; use centering = pilot")
            return ObservableF(fm - mu, fp - mu, "exact", mu, 0.0)
        if kind == "zero":
            return ObservableF(0.0, 0.0, "exact")
        mu = stationary_mean(cfg.model)
        if mu is None:
            raise PreconditionError("no closed-form mean for this model; use centering = pilot")
        ef = fm * (1.0 - mu) / 2.0 + fp * (1.0 + mu) / 2.0
        return ObservableF(fm - ef, fp - ef, "exact", ef, 0.0)
    n_pilot = cfg.pilot_n or max(cfg.n, 100_000)
    ef, se = pilot_mean(cfg.model, ObservableF(fm, fp, "none"), n_pilot, cfg.seed)
    return ObservableF(fm - ef, fp - ef, "empirical", ef, se)


# ---------------------------------------------------------------------------
# replica workers


@dataclass(frozen=True)
class ReplicaTask:
    model: object
    f: ObservableF
    n: int
    n_sim: int
    seed: int
    replica_id: int
    margin: int | None
    bias_tolerance: float
    allow_uncertified: bool
    probe_lag: int
    grid: tuple[float, ...]
    checkpoint: int
    write_path: str | None = None
    backend: str | None = None


@dataclass
class ReplicaResult:
    replica_id: int
    s_n: float
    path: np.ndarray
    blocks: BlockSet | None
    autocov: AutocovStats | None
    gaps: np.ndarray
    bias_bound: float
    margin: int
    n_renewals: int
    first_renewal: int | None
    containment: bool
    telescoping_gap: float
    straddle: int | None
    backend: str
    notes: list[str] = field(default_factory=list)


def run_replica(task: ReplicaTask) -> ReplicaResult:
    stream = UniformStream(task.seed, task.replica_id, SUBSTREAM_MAIN)
    traj = simulate(
        task.model,
        task.n_sim,
        stream,
        margin=task.margin,
        bias_tolerance=task.bias_tolerance,
        allow_uncertified=task.allow_uncertified,
        backend=task.backend,
    )
    if task.write_path is not None:
        Path(task.write_path).write_text(trajectory_csv(traj), encoding="utf-8")
    notes = []
    vals = observable_values(task.f, traj.symbols)
    head = vals[: task.n]
    s_n = math.fsum(head.tolist()) / math.sqrt(task.n)
    path = clt.partial_sums(head, task.grid)
    blocks = None
    telescoping = math.nan
    try:
        blocks = extract_blocks(traj, task.f)
        telescoping = abs(blocks.total() - math.fsum(vals.tolist()))
    except InsufficientData as exc:
        notes.append(str(exc))
    series = clt.renewal_series(traj, task.f)
    autocov = clt.autocov_stats(series, task.probe_lag) if series.size > task.probe_lag else None
    r = traj.renewal_indices
    st = straddling_gaps(r, [task.checkpoint])
    return ReplicaResult(
        replica_id=task.replica_id,
        s_n=s_n,
        path=path,
        blocks=blocks,
        autocov=autocov,
        gaps=traj.gaps(),
        bias_bound=traj.bias_bound,
        margin=traj.horizon_margin,
        n_renewals=int(r.size),
        first_renewal=int(r[0]) if r.size else None,
        containment=lookback_containment(traj),
        telescoping_gap=telescoping,
        straddle=int(st[0]) if st.size else None,
        backend=traj.meta["backend"],
        notes=notes,
    )


def run_replicas(tasks: Sequence[ReplicaTask], workers: int = 1, fn: Callable = run_replica) -> list:
    """Run ``fn`` over ``tasks``; results come back in task order for any worker count."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def make_tasks(
    cfg: ExperimentConfig,
    f: ObservableF,
    replicas: int | None = None,
    extra: int = 0,
    out_dir: Path | None = None,
) -> list[ReplicaTask]:
    R = cfg.replicas if replicas is None else replicas
    n_sim = cfg.n + extra
    probe = cfg.max_lag if cfg.max_lag is not None else clt.default_probe_lag(cfg.n)
    return [
        ReplicaTask(
            model=cfg.model,
            f=f,
            n=cfg.n,
            n_sim=n_sim,
            seed=cfg.seed,
            replica_id=r,
            margin=cfg.margin,
            bias_tolerance=cfg.bias_tolerance,
            allow_uncertified=cfg.allow_uncertified,
            probe_lag=probe,
            grid=tuple(cfg.path_grid),
            checkpoint=cfg.n // 2,
            write_path=None if out_dir is None else str(out_dir / trajectory_name(r)),
        )
        for r in range(R)
    ]


def trajectory_name(replica_id: int) -> str:
    return f"trajectory_{replica_id:05d}.csv"


def _require_model(cfg: ExperimentConfig, what: str) -> None:
    if isinstance(cfg.model, ASequence):
        raise PreconditionError(f"{what} needs a simulatable model; a_sequence only supports renewal and classify")


def exact_gap_law(model, m_max: int = GAP_DEPTH) -> GapLaw | None:
    """Gap law of the detected renewals, or ``None`` when the product of the ``a_k`` is not certified."""
    if certify(model) <= 0.0:
        return None
    return gap_law_dp(a_lower_sequence(model, m_max), m_max)


def _manifest_header(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "command": command,
        "package_version": __version__,
        "config": cfg.to_dict(),
        "model_hash": model_hash(cfg.model) if not isinstance(cfg.model, ASequence) else None,
    }


# ---------------------------------------------------------------------------
# commands; each returns (payload, files written)


@dataclass
class CommandResult:
    payload: dict
    files: dict[str, str]
    failed: bool = False


def _write_all(out: Path, files: dict[str, str]) -> dict[str, str]:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    return {name: str(out / name) for name in files}


def cmd_simulate(cfg: ExperimentConfig) -> CommandResult:
    """One trajectory CSV per replica plus ``manifest.json``."""
    _require_model(cfg, "simulate")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    f = ObservableF.identity()
    tasks = make_tasks(cfg, f, out_dir=out)
    results = run_replicas(tasks, cfg.workers)
    entries = [
        {
            "replica_id": r.replica_id,
            "seed": cfg.seed,
            "substream": SUBSTREAM_MAIN,
            "file": trajectory_name(r.replica_id),
            "bias_bound": r.bias_bound,
            "margin": r.margin,
            "renewals": r.n_renewals,
            "first_renewal": r.first_renewal,
        }
        for r in results
    ]
    manifest = _manifest_header(cfg, "simulate")
    manifest.update(
        {
            "backend": results[0].backend,
            "replicas": entries,
            "bias_bound": max(e["bias_bound"] for e in entries),
            "margin": results[0].margin,
        }
    )
    files = _write_all(out, {"manifest.json": dumps(manifest)})
    files.update({e["file"]: str(out / e["file"]) for e in entries})
    return CommandResult(manifest, files)


@dataclass
class Pooled:
    """Replica results merged in replica-id order."""

    results: list[ReplicaResult]
    f: ObservableF
    gap_law: GapLaw | None

    @property
    def values(self) -> np.ndarray:
        return np.array([r.s_n for r in self.results])

    @property
    def paths(self) -> np.ndarray:
        return np.vstack([r.path for r in self.results])

    def blocks(self) -> BlockSet:
        sets = [r.blocks for r in self.results if r.blocks is not None]
        if not sets:
            raise InsufficientData("no replica produced two confirmed renewals")
        from .regen import merge_blocks

        return merge_blocks(sets)

    def autocov(self) -> AutocovStats:
        parts = [r.autocov for r in self.results if r.autocov is not None]
        return clt.merge_autocov(parts)

    def gaps(self) -> np.ndarray:
        return np.concatenate([r.gaps for r in self.results])


def run_pooled(cfg: ExperimentConfig, replicas: int | None = None, extra: int = 0) -> Pooled:
    _require_model(cfg, "this command")
    f = resolve_observable(cfg)
    results = run_replicas(make_tasks(cfg, f, replicas, extra), cfg.workers)
    return Pooled(results, f, exact_gap_law(cfg.model))


def estimate(pooled: Pooled, cfg: ExperimentConfig, method: str) -> VarianceEstimate:
    if method == "block":
        return clt.variance_block(pooled.blocks(), cfg.min_blocks)
    if method == "autocov":
        law = pooled.gap_law
        if law is None and cfg.max_lag is None:
            g = pooled.gaps()
            law = gap_law_empirical(g) if g.size else None
        return clt.autocov_estimate(pooled.autocov(), pooled.f, max_lag=cfg.max_lag, gap_law=law, taper=cfg.taper)
    if method == "replication":
        return clt.variance_replication(pooled.values, cfg.min_replicas)
    raise PreconditionError(f"unknown method {method!r}")


METHODS = ("block", "autocov", "replication")


def cmd_variance(cfg: ExperimentConfig, method: str = "all") -> CommandResult:
    """Requested variance estimates with pairwise agreement z-scores."""
    methods = METHODS if method == "all" else (method,)
    pooled = run_pooled(cfg)
    ests = [estimate(pooled, cfg, m) for m in methods]
    payload = _manifest_header(cfg, "variance")
    payload.update(
        {
            "observable": {"minus": pooled.f.minus, "plus": pooled.f.plus, "centering": pooled.f.centering,
                           "center_estimate": pooled.f.center_estimate, "center_se": pooled.f.center_se},
            "estimates": {e.method: e.to_dict() for e in ests},
            "agreement_z": clt.agreement(ests),
            "bias_bound": max(r.bias_bound for r in pooled.results),
        }
    )
    files = {"variance.json": dumps(payload)}
    files["replicas.csv"] = csv_text(["replica_id", "s_n_over_sqrt_n"], [(r.replica_id, r.s_n) for r in pooled.results])
    for e in ests:
        if e.method == "autocov":
            prof = e.details["lag_profile"]
            files["lag_profile.csv"] = csv_text(["lag", "autocovariance"], list(enumerate(prof)))
    return CommandResult(payload, _write_all(Path(cfg.out), files))


def _a_sequence(cfg: ExperimentConfig, depth: int) -> np.ndarray:
    if isinstance(cfg.model, ASequence):
        return cfg.model.sequence(depth)
    return a_lower_sequence(cfg.model, depth)


def cmd_renewal(cfg: ExperimentConfig) -> CommandResult:
    """Return probabilities, exact and empirical gap survival, and the decay regime."""
    M = cfg.m_max
    a = _a_sequence(cfg, max(M, GAP_DEPTH))
    table = rho_table(a[:M], M)
    law = gap_law_dp(a, max(M, GAP_DEPTH)) if a[0] > 0.0 else None
    dp_surv = law.survival()[: M + 1] if law is not None else None
    emp = None
    emp_mean = None
    if not isinstance(cfg.model, ASequence):
        gaps = run_pooled(cfg).gaps()
        if gaps.size:
            el = gap_law_empirical(gaps, max(M, int(gaps.max())))
            emp = el.survival()[: M + 1]
            emp_mean = float(gaps.mean())
    rows = []
    for m in range(1, M + 1):
        rows.append(
            (
                m,
                float(table.rho[m]),
                None if dp_surv is None else float(dp_surv[m]),
                None if emp is None else float(emp[m]),
            )
        )
    decay = cfg.model.decay if isinstance(cfg.model, ASequence) else decay_class(cfg.model)
    regime = "none" if decay is None else classify_decay(decay)
    payload = _manifest_header(cfg, "renewal")
    payload.update(
        {
            "rho": table.report(),
            "gap_law": None
            if law is None
            else {"mean": law.mean(), "second_moment": law.second_moment(), "truncated_mass": law.deficit},
            "empirical_mean_gap": emp_mean,
            "regime": regime,
            "summability": summability_checks(a[:M], decay),
            "convention_note": RHO_CONVENTION_NOTE,
        }
    )
    files = {
        "renewal.csv": csv_text(["M", "rho_M", "gap_survival_exact", "gap_survival_empirical"], rows),
        "renewal.json": dumps(payload),
    }
    return CommandResult(payload, _write_all(Path(cfg.out), files))


def classification(model) -> dict:
    """Decay class, regime, uniqueness certificate and an ``a_k`` table for a model."""
    if isinstance(model, ASequence):
        d = model.decay
        return {
            "model": model.params(),
            "decay_class": None if d is None else {"log_exp": d.log_exp, "pow_exp": d.pow_exp, "const": d.const, "threshold": d.threshold},
            "regime": "none" if d is None else classify_decay(d),
            "a_k": model.sequence(10).tolist(),
        }
    d = decay_class(model)
    tail = variation_tail(model)
    rows = []
    for k in range(0, 11):
        row = {"k": k, "certified_bound": a_k_uniform(model, k).value, "detection": float(a_lower_sequence(model, k)[k])}
        if k <= min(model.k_scan_max, 12):
            row["exact_scan"] = a_k_uniform(model, k, "exact_scan").value
        rows.append(row)
    return {
        "model": model.params(),
        "model_hash": model_hash(model),
        "variation_tail": {"const": tail.const, "log_exp": tail.log_exp, "pow_exp": tail.pow_exp, "threshold": tail.threshold},
        "decay_class": None if d is None else {"log_exp": d.log_exp, "pow_exp": d.pow_exp, "const": d.const, "threshold": d.threshold},
        "regime": model_regime(model),
        "uniqueness": uniqueness_class(model),
        "product_lower_bound": certify(model),
        "a_k": rows,
    }


def cmd_classify(cfg: ExperimentConfig) -> CommandResult:
    payload = _manifest_header(cfg, "classify")
    payload.update(classification(cfg.model))
    return CommandResult(payload, _write_all(Path(cfg.out), {"classify.json": dumps(payload)}))


def clt_report(pooled: Pooled, cfg: ExperimentConfig) -> dict:
    if cfg.sigma is not None:
        sigma2, sigma2_se, source = cfg.sigma**2, 0.0, "config"
    else:
        vb = clt.variance_block(pooled.blocks(), cfg.min_blocks)
        sigma2, sigma2_se, source = vb.value, vb.std_error, "block"
    res = clt.clt_test(pooled.values, math.sqrt(sigma2), cfg.min_replicas)
    path = clt.path_variance_check(pooled.paths, sigma2, sigma2_se, cfg.path_grid)
    return {"sigma2": sigma2, "sigma2_se": sigma2_se, "sigma_source": source, "ks": res.to_dict(), "path_variance": path}


def cmd_clt_test(cfg: ExperimentConfig) -> CommandResult:
    pooled = run_pooled(cfg)
    payload = _manifest_header(cfg, "clt-test")
    payload.update(clt_report(pooled, cfg))
    grid = list(cfg.path_grid)
    rows = [(r.replica_id, r.s_n, *r.path.tolist()) for r in pooled.results]
    files = {
        "clt.json": dumps(payload),
        "replicas.csv": csv_text(["replica_id", "s_n_over_sqrt_n", *[f"path_{t:g}" for t in grid]], rows),
    }
    return CommandResult(payload, _write_all(Path(cfg.out), files))


# ---------------------------------------------------------------------------
# validation suite


@dataclass
class Check:
    name: str
    passed: bool
    statistic: float | None = None
    threshold: float | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "statistic": self.statistic, "threshold": self.threshold, "detail": self.detail}


def _z_check(name: str, z: float, detail: dict | None = None, limit: float = 3.0) -> Check:
    return Check(name, bool(z <= limit), float(z), limit, detail or {})


def _guarded(name: str, fn: Callable[[], Check]) -> Check:
    try:
        return fn()
    except GChainError as exc:
        return Check(name, False, None, None, {"error": f"{type(exc).__name__}: {exc}"})


def wald_extra(cfg: ExperimentConfig, law: GapLaw | None) -> int:
    """Steps simulated past ``n`` so that the block straddling ``n`` completes."""
    mean = law.mean() if law is not None else 1.0
    return max(1000, cfg.n // 10, int(math.ceil(50.0 * mean)))


def validation_checks(cfg: ExperimentConfig) -> list[Check]:
    _require_model(cfg, "validate")
    model = cfg.model
    R = max(cfg.replicas, cfg.min_replicas)
    law = exact_gap_law(model)
    pooled = run_pooled(cfg, R, wald_extra(cfg, law))
    f = pooled.f
    checks: list[Check] = []

    tele = max((r.telescoping_gap for r in pooled.results if r.blocks is not None), default=math.nan)
    # integer-valued observables sum exactly; otherwise allow one rounding per block
    integral = float(f.minus).is_integer() and float(f.plus).is_integer()
    tele_tol = 0.0 if integral else 1e-15 * (cfg.n + wald_extra(cfg, law)) * max(f.sup, 1.0)
    checks.append(Check("block_telescoping", bool(tele <= tele_tol), tele, tele_tol))
    checks.append(Check("lookback_containment", all(r.containment for r in pooled.results)))
    checks.append(
        Check(
            "bias_bound",
            all(r.bias_bound <= cfg.bias_tolerance for r in pooled.results) or cfg.margin is not None,
            max(r.bias_bound for r in pooled.results),
            cfg.bias_tolerance,
        )
    )

    worst = 0.0
    for k in range(0, min(model.k_scan_max, 10) + 1):
        worst = max(worst, abs(a_k_uniform(model, k, "exact_scan").value - (1.0 - var_k(model, k).value)))
    checks.append(Check("a_k_equals_one_minus_var_k", worst <= 1e-12, worst, 1e-12))

    a = a_lower_sequence(model, 400)
    raised = np.minimum(1.0, a + 0.1 * (1.0 - a))
    rho_lo = rho_table(a, 400).rho
    rho_hi = rho_table(raised, 400).rho
    excess = float(np.max(rho_hi - rho_lo))
    checks.append(Check("rho_monotone_in_a", excess <= 1e-12, excess, 1e-12))

    def mean_zero() -> Check:
        bs = pooled.blocks()
        xi = np.asarray(bs.xi)
        se = float(xi.std(ddof=1) / math.sqrt(xi.size))
        se = math.hypot(se, float(np.mean(bs.gaps)) * f.center_se)
        mean = float(xi.mean())
        z = abs(mean) / se if se > 0 else (0.0 if mean == 0.0 else math.inf)
        return _z_check("mean_zero_blocks", z, {"mean_xi": mean, "se": se, "centering": f.centering})

    checks.append(_guarded("mean_zero_blocks", mean_zero))

    def wald() -> Check:
        sets = [r.blocks for r in pooled.results]
        if any(s is None for s in sets):
            raise InsufficientData("a replica had fewer than two renewals")
        w = clt.wald_check(sets, cfg.n, cfg.min_replicas)
        return _z_check("wald_identity", w.z, w.to_dict())

    checks.append(_guarded("wald_identity", wald))

    def scaling() -> Check:
        bs = pooled.blocks()
        base = clt.variance_block(bs, cfg.min_blocks).value
        doubled = BlockSet(bs.starts, bs.ends, 2.0 * bs.xi, bs.i_n, 2 * bs.head_sum, 2 * bs.tail_sum, bs.n)
        scaled = clt.variance_block(doubled, cfg.min_blocks).value
        err = abs(scaled - 4.0 * base)
        return Check("variance_scaling", err == 0.0, err, 0.0)

    checks.append(_guarded("variance_scaling", scaling))

    ests: list[VarianceEstimate] = []
    for m in METHODS:
        try:
            ests.append(estimate(pooled, cfg, m))
        except GChainError as exc:
            checks.append(Check(f"estimator_{m}", False, None, None, {"error": f"{type(exc).__name__}: {exc}"}))
    regime = model_regime(model)
    for pair, z in clt.agreement(ests).items():
        if "autocov" in pair and regime != "fclt_var2":
            continue
        checks.append(_z_check(f"agreement_{pair}", z))
    block = next((e for e in ests if e.method == "block"), None)
    if block is not None and block.value > 0.0:
        res = clt.clt_test(pooled.values, math.sqrt(block.value), cfg.min_replicas)
        checks.append(Check("clt_ks", res.ks_pvalue > 0.01, res.ks_pvalue, 0.01, res.to_dict()))
        for row in clt.path_variance_check(pooled.paths, block.value, block.std_error, cfg.path_grid):
            checks.append(_z_check(f"path_variance_t{row['t']:g}", row["z"], row))

    def consistency(name: str, h, hd: int) -> Check:
        from .regen import simulate as _sim

        traj = _sim(model, cfg.n, UniformStream(cfg.seed, 0, SUBSTREAM_MAIN), cfg.margin, cfg.bias_tolerance, cfg.allow_uncertified)
        c = clt.consistency_check(model, traj, h, 1, h_depth=hd)
        return _z_check(name, c.z, c.to_dict())

    checks.append(_guarded("consistency_h_one", lambda: consistency("consistency_h_one", lambda w: np.ones(len(w)), 0)))
    checks.append(
        _guarded("consistency_h_last_plus", lambda: consistency("consistency_h_last_plus", lambda w: (w[:, 0] > 0).astype(float), 1))
    )

    def size_bias() -> Check:
        st = np.array([r.straddle for r in pooled.results if r.straddle is not None])
        res = size_bias_chi2(st, pooled.gaps())
        return Check("size_biased_straddle", res.pvalue > 0.01, res.pvalue, 0.01, {"chi2": res.statistic, "dof": res.dof, "samples": res.samples})

    checks.append(_guarded("size_biased_straddle", size_bias))
    return checks


def cmd_validate(cfg: ExperimentConfig) -> CommandResult:
    checks = validation_checks(cfg)
    failed = [c.name for c in checks if not c.passed]
    payload = _manifest_header(cfg, "validate")
    payload.update({"checks": [c.to_dict() for c in checks], "failed": failed, "passed": not failed})
    return CommandResult(payload, _write_all(Path(cfg.out), {"validate.json": dumps(payload)}), failed=bool(failed))
