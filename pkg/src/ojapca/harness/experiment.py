"""Monte-Carlo trials, aggregation, rate fitting and the offline comparison."""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..engine import TwoPhase, TrialRecord, init_state, measure, run, save_checkpoint
from ..exceptions import HeadSingular, NonPositiveError, TooFewPoints
from ..metrics import scrT
from ..samplers import SampleStream
from ..theory import (
    hadamard_bound_trajectory,
    minimax_lower_bound,
    offline_pca,
    phi,
    phi_gap_free,
    remainder_term,
)
from .config import ExperimentConfig, apply_override, build_config, load_yaml
from .io import ingest_stream, write_json, write_records_csv

log = logging.getLogger(__name__)


def trial_seeds(seed: int) -> list[np.random.SeedSequence]:
    """Independent ``[init, samples, offline]`` seed sequences for one trial."""
    return np.random.SeedSequence(int(seed)).spawn(3)


def _child(ss: np.random.SeedSequence, k: int) -> np.random.SeedSequence:
    # deterministic k-th child without mutating ss
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (k,))


def _workers(threads: int | None) -> int:
    return max(1, threads or os.cpu_count() or 1)


@dataclass
class TrialResult:
    seed: int
    records: list[TrialRecord]
    T: dict = field(default_factory=dict)  # checkpoint n -> chart matrix (d-p) x p


def run_trial(cfg: ExperimentConfig, seed: int, capture_T: bool = False) -> TrialResult:
    """One synthetic trial: fresh init and sample stream derived from ``seed``."""
    init_ss, sample_ss, _ = trial_seeds(seed)
    spec = cfg.spec
    source = SampleStream(spec, sample_ss, cfg.n_steps)
    captured = {}

    def grab(state, rec):
        V = spec.basis.T @ state.basis()
        try:
            captured[state.n] = scrT(V, cfg.p)
        except HeadSingular:
            captured[state.n] = None

    diagnostics = None
    if cfg.diagnostics:
        c = cfg.constants
        diagnostics = {"mu": c["mu"], "kappa": c["kappa"], "epsilon": c["epsilon"]}
    _, records = run(
        source,
        cfg.n_steps,
        cfg.schedule,
        cfg.normalizer,
        cfg.checkpoints,
        state=init_state(spec.d, cfg.p, init_ss),
        spec=spec,
        diagnostics=diagnostics,
        callback=grab if capture_T else None,
        record_seed=int(seed),
    )
    return TrialResult(int(seed), records, captured)


def run_trials(cfg: ExperimentConfig, capture_T: bool = False,
               threads: int | None = None) -> list[TrialResult]:
    """Run all ``R`` trials in parallel; results come back in seed order."""
    threads = cfg.threads if threads is None else threads
    seeds = cfg.seeds
    workers = min(_workers(threads), len(seeds))
    if workers == 1:
        return [run_trial(cfg, s, capture_T) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_trial(cfg, s, capture_T), seeds))


# ---------------------------------------------------------------------------
# aggregation


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    empirical_constant: float | None


def fit_rate(ns, errors, phi_value: float | None = None) -> RateFit:
    """Least-squares line through ``(ln n, ln error)``.

    ``empirical_constant`` is ``n * error / phi_value`` at the last point.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.size != errors.size:
        raise ValueError("ns and errors differ in length")
    if ns.size < 3:
        raise TooFewPoints(f"need at least 3 checkpoints, got {ns.size}")
    if np.any(ns <= 0) or np.any(~(errors > 0)):
        raise NonPositiveError("rate fitting needs positive n and positive finite errors")
    if not np.all(np.isfinite(errors)):
        raise NonPositiveError("errors must be finite")
    x, y = np.log(ns), np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    const = None
    if phi_value:
        const = float(ns[-1] * errors[-1] / phi_value)
    return RateFit(float(slope), float(intercept), r2, const)


def _stats(values: np.ndarray) -> dict:
    if values.size == 0:
        return {"mean": None, "p05": None, "p95": None}
    if not np.all(np.isfinite(values)):
        fin = values[np.isfinite(values)]
        return {
            "mean": math.inf,
            "p05": float(np.percentile(fin, 5)) if fin.size else None,
            "p95": math.inf,
        }
    return {
        "mean": float(np.mean(values)),
        "p05": float(np.percentile(values, 5)),
        "p95": float(np.percentile(values, 95)),
    }


def _column(records, key) -> np.ndarray:
    return np.array([math.inf if getattr(r, key) is None else getattr(r, key) for r in records],
                    dtype=float)


def error_metric(cfg: ExperimentConfig) -> str:
    """Which per-trial quantity the rate is fitted on."""
    return "scrTq2" if cfg.gap_free else "sin2F"


def checkpoint_stats(cfg: ExperimentConfig, records: list[TrialRecord]) -> list[dict]:
    by_n: dict[int, list[TrialRecord]] = {}
    for r in records:
        by_n.setdefault(r.n, []).append(r)
    rows = []
    for n in sorted(by_n):
        rs = by_n[n]
        row = {"n": n, "trials": len(rs)}
        for key in ("sin2F", "tanF", "tan2"):
            row[key] = _stats(_column(rs, key))
        row["scrTq2"] = _stats(_column(rs, "scrTqF") ** 2)
        row["escaped"] = sum(1 for r in rs if r.n_out is not None)
        rows.append(row)
    return rows


def _phi_value(cfg: ExperimentConfig) -> float | None:
    lam = cfg.spec.lambdas
    try:
        if cfg.gap_free:
            return phi_gap_free(lam, cfg.p, cfg.q, cfg.gamma_tilde).value
        return phi(lam, cfg.p).value
    except Exception:  # noqa: BLE001 - overlays are best effort
        return None


def burn_in(cfg: ExperimentConfig, stats: list[dict]) -> int:
    """Smallest checkpoint kept for fitting.

    Discards ``n < 4 N1`` (``N1`` is the first checkpoint whose mean error is
    below 0.5) and, for two-phase schedules, ``n <= n_o``.
    """
    metric = error_metric(cfg)
    n1 = None
    for row in stats:
        m = row[metric]["mean"]
        if row["n"] > 0 and m is not None and m < 0.5:
            n1 = row["n"]
            break
    cut = 1 if n1 is None else 4 * n1
    if isinstance(cfg.schedule, TwoPhase):
        cut = max(cut, cfg.schedule.n_o + 1)
    return cut


def theory_overlays(cfg: ExperimentConfig, stats: list[dict], trials=None) -> dict:
    spec = cfg.spec
    c = cfg.constants
    q = cfg.target_q
    ph = _phi_value(cfg)
    out = {"phi": ph, "curves": []}
    c_eta = getattr(cfg.schedule, "c_eta", None)
    for row in stats:
        n = row["n"]
        if n == 0:
            continue
        entry = {"n": n, "phi_over_n": None if ph is None else ph / n}
        try:
            entry["minimax"] = minimax_lower_bound(spec.lambdas, cfg.p, q, n, c["c"])
        except Exception:  # noqa: BLE001
            entry["minimax"] = None
        if ph is not None and c_eta is not None:
            entry["theorem_rate"] = 64 * c_eta * c["psi4"] * ph / ((1 - c["delta"]) * n)
        out["curves"].append(entry)
    if trials and not cfg.gap_free:
        out["hadamard"] = hadamard_overlay(cfg, trials)
    return out


def hadamard_overlay(cfg: ExperimentConfig, trials: list[TrialResult]) -> list[dict] | None:
    """Envelope of ``E[T o T]`` started from the empirical second moment at the warm start."""
    start = cfg.schedule.n_o if isinstance(cfg.schedule, TwoPhase) else 0
    marks = [n for n in cfg.checkpoints if n >= start]
    if not marks:
        return None
    n0 = marks[0]
    T0 = empirical_second_moment(trials, n0)
    if T0 is None:
        return None
    T0 = np.sqrt(T0)
    c = cfg.constants
    d = cfg.spec.d
    rows = []
    for n in marks[1:]:
        env = hadamard_bound_trajectory(cfg.spec.lambdas, cfg.p, cfg.schedule,
                                        16 * c["psi4"], n, T0, start=n0)
        emp = empirical_second_moment(trials, n)
        rows.append({
            "n": n,
            "start": n0,
            "envelope_sum": float(env.sum()),
            "remainder": remainder_term(c["C_R"], c["epsilon"], n, d, c["delta"]),
            "empirical_sum": None if emp is None else float(emp.sum()),
        })
    return rows


def empirical_second_moment(trials, n: int, keep=None) -> np.ndarray | None:
    mats = [t.T.get(n) for t in trials if keep is None or keep(t)]
    mats = [M for M in mats if M is not None]
    if not mats:
        return None
    return np.mean([M * M for M in mats], axis=0)


def summarize(cfg: ExperimentConfig, records: list[TrialRecord], trials=None) -> dict:
    stats = checkpoint_stats(cfg, records)
    summary = {"config": cfg.echo(), "checkpoints": stats, "theory": None, "fit": None}
    if not cfg.synthetic:
        return summary
    summary["theory"] = theory_overlays(cfg, stats, trials)
    metric = error_metric(cfg)
    cut = burn_in(cfg, stats)
    kept = [r for r in stats if r["n"] >= cut and r[metric]["mean"] is not None]
    try:
        fit = fit_rate([r["n"] for r in kept], [r[metric]["mean"] for r in kept],
                       summary["theory"]["phi"])
        summary["fit"] = {**fit._asdict(), "metric": metric, "burn_in": cut}
    except (TooFewPoints, NonPositiveError) as exc:
        summary["fit"] = {"error": str(exc), "metric": metric, "burn_in": cut}
    return summary


@dataclass
class ExperimentResult:
    records: list[TrialRecord]
    summary: dict
    trials: list[TrialResult] = field(default_factory=list, repr=False)


def run_experiment(cfg: ExperimentConfig, threads: int | None = None,
                   capture_T: bool = True) -> ExperimentResult:
    """Run ``R`` trials and aggregate; writes the configured outputs.

    If a trial fails, the records of the trials before it (in seed order) are
    still written to the CSV output before the error propagates.
    """
    if not cfg.synthetic:
        raise ValueError("run_experiment needs a synthetic spectrum; use ingest_run for data")
    threads = cfg.threads if threads is None else threads
    seeds = cfg.seeds
    results: dict[int, TrialResult] = {}
    error = None
    workers = min(_workers(threads), len(seeds))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(s, pool.submit(run_trial, cfg, s, capture_T)) for s in seeds]
        for s, fut in futures:
            try:
                results[s] = fut.result()
            except Exception as exc:  # noqa: BLE001 - re-raised below
                error = error or exc
    ordered = []
    for s in seeds:
        if s not in results:
            break
        ordered.append(results[s])
    records = [r for t in ordered for r in t.records]
    if error is not None:
        if cfg.output.get("csv"):
            write_records_csv(records, cfg.output["csv"])
        raise error
    summary = summarize(cfg, records, ordered if capture_T else None)
    result = ExperimentResult(records, summary, ordered)
    write_outputs(cfg, result.records, summary)
    return result


def write_outputs(cfg: ExperimentConfig, records, summary) -> None:
    if cfg.output.get("csv"):
        write_records_csv(records, cfg.output["csv"])
    if cfg.output.get("json"):
        write_json(summary, cfg.output["json"])


# ---------------------------------------------------------------------------
# online vs offline


def ratio_or_na(online: float, offline: float, tiny: float = 1e-24):
    """``online / offline``; ``None`` (NA) when both are numerically zero."""
    if online <= tiny and offline <= tiny:
        return None
    if offline <= tiny:
        return math.inf
    return online / offline


def offline_errors(cfg: ExperimentConfig, seed: int, ns) -> dict[int, float]:
    """Offline PCA error on an independent fresh batch of size n, per checkpoint."""
    _, _, off_ss = trial_seeds(seed)
    out = {}
    for k, n in enumerate(ns):
        if n < 1:
            continue
        X = cfg.spec.draw(np.random.default_rng(_child(off_ss, k)), n)
        U = offline_pca(X, cfg.p)
        out[n] = measure(U, cfg.spec)["sin2F"]
    return out


def compare_online_offline(cfg: ExperimentConfig, threads: int | None = None,
                           online: ExperimentResult | None = None) -> list[dict]:
    """Per-checkpoint mean online and offline ``||sin Theta||_F^2`` with their ratio."""
    if not cfg.synthetic:
        raise ValueError("compare needs a synthetic spectrum")
    if online is None:
        online = run_experiment(cfg, threads=threads, capture_T=False)
    ns = [n for n in cfg.checkpoints if n >= 1]
    workers = min(_workers(cfg.threads if threads is None else threads), cfg.R)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        off = list(pool.map(lambda s: offline_errors(cfg, s, ns), cfg.seeds))
    rows = []
    for n in ns:
        on_vals = _column([r for r in online.records if r.n == n], "sin2F")
        off_vals = np.array([o[n] for o in off])
        on_mean = float(np.mean(on_vals))
        off_mean = float(np.mean(off_vals))
        mm = minimax_lower_bound(cfg.spec.lambdas, cfg.p, cfg.target_q, n, cfg.constants["c"])
        rows.append({
            "n": n,
            "online": on_mean,
            "offline": off_mean,
            "ratio": ratio_or_na(on_mean, off_mean),
            "minimax": mm,
            "online_over_minimax": on_mean / mm,
            "offline_over_minimax": off_mean / mm,
        })
    return rows


# ---------------------------------------------------------------------------
# sweeps and real data


def sweep(raw: dict, threads: int | None = None, env=None) -> list[dict]:
    """Run one experiment per point of the grid in ``raw['sweep']``.

    Grid keys are dotted paths into the config (``schedule.c_eta``); output
    paths get a ``-NNN`` suffix per grid point.
    """
    grid = raw.get("sweep") or {}
    base = {k: v for k, v in raw.items() if k != "sweep"}
    build_config(base, env=env)  # fail fast on the base config
    keys = list(grid)
    results = []
    for idx, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        point = base
        for k, v in zip(keys, combo):
            point = apply_override(point, k, v)
        out = dict(point.get("output") or {})
        for key in ("csv", "json", "checkpoint"):
            if out.get(key):
                p = Path(out[key])
                out[key] = str(p.with_name(f"{p.stem}-{idx:03d}{p.suffix}"))
        point = {**point, "output": out}
        cfg = build_config(point, env=env)
        res = run_experiment(cfg, threads=threads, capture_T=False)
        results.append({"index": idx, "point": dict(zip(keys, combo)),
                        "fit": res.summary["fit"], "checkpoints": res.summary["checkpoints"]})
    return results


def ingest_run(cfg: ExperimentConfig) -> ExperimentResult:
    """Single pass of the engine over a data file; final basis goes to the checkpoint file."""
    if cfg.data is None:
        raise ValueError("ingest_run needs a data file")
    path = Path(cfg.data)
    if not path.is_absolute() and cfg.source_path:
        path = Path(cfg.source_path).parent / path
    source = ingest_stream(path, cfg.d, cfg.data_format)
    init_ss, _, _ = trial_seeds(cfg.base_seed)
    state = init_state(source.d, cfg.p, init_ss)
    state, records = run(source, cfg.n_steps, cfg.schedule, cfg.normalizer, cfg.checkpoints,
                         state=state, record_seed=cfg.base_seed)
    summary = {
        "config": cfg.echo(),
        "n_samples": state.n,
        "d": state.d,
        "p": state.p,
        "checkpoints": [r.n for r in records],
        "basis": state.basis(),
    }
    if cfg.output.get("checkpoint"):
        save_checkpoint(cfg.output["checkpoint"], state, cfg.schedule, cfg.normalizer,
                        cfg.base_seed)
    write_outputs(cfg, records, summary)
    return ExperimentResult(records, summary)


def load_raw(path) -> dict:
    return load_yaml(path)
