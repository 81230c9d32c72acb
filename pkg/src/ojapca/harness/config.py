"""Experiment configuration: YAML schema, defaults and validation.

Top-level keys (all optional except ``p`` and one of ``lambdas``/``data``)::

    lambdas: [4, 3, 1, 1]      # synthetic spectrum, nonincreasing
    family: gaussian           # gaussian | rademacher | uniform_ball
    rotation_seed: null        # Haar rotation of the eigenbasis
    data: samples.bin          # real-data mode instead of lambdas
    d: null                    # required for CSV data
    p: 2
    q: null                    # gap-free target dimension
    gamma_tilde: null          # gap-free threshold
    schedule: harmonic         # or {kind: two_phase, n_o: 500, ...}
    normalizer: qr             # or {kind: deferred, period: 10}
    n_steps: 1000
    R: 10
    base_seed: 0
    checkpoints: null          # default: powers of two plus n_steps
    diagnostics: false
    threads: null
    output: {csv: ..., json: ..., checkpoint: ...}
    constants: {c_eta, c_o_prime, c_o, c, C_R, mu, kappa, delta, epsilon, psi4}
    sweep: {key: [values, ...]}   # only for the sweep subcommand

Environment overrides: ``OJA_SEED`` (base_seed), ``OJA_THREADS`` (threads).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..engine import (
    Normalizer,
    Schedule,
    TwoPhase,
    geometric_checkpoints,
    normalizer_from_dict,
    schedule_from_dict,
)
from ..exceptions import GapViolation, ParseError, ThresholdOutOfRange, ValidationError
from ..samplers import FAMILIES, CovSpec, make_spec
from ..theory import N_o_formula, check_gamma_tilde, default_B

DEFAULT_CONSTANTS = {
    "c_eta": 2.0,
    "c_o_prime": 1.0,
    "c_o": 1.0,
    "c": 1.0,
    "C_R": 10.0,
    "mu": 9.0,
    "kappa": 2.0,
    "delta": 0.1,
    "epsilon": 0.5,
    "psi4": 16.0,
}

TOP_LEVEL_KEYS = {
    "lambdas", "family", "rotation_seed", "data", "data_format", "d", "p", "q",
    "gamma_tilde", "schedule", "normalizer", "n_steps", "R", "base_seed", "checkpoints",
    "diagnostics", "threads", "output", "constants", "sweep",
}
OUTPUT_KEYS = {"csv", "json", "checkpoint"}
NESTED_DEFAULTS = {"schedule": "harmonic", "normalizer": "qr"}
SCHEDULE_KEYS = {
    "constant": {"eta_o"},
    "harmonic": {"c_eta", "gamma_ref"},
    "two_phase": {"n_o", "c_o_prime", "c_eta", "gamma_ref", "d", "delta"},
}


@dataclass
class ExperimentConfig:
    p: int
    n_steps: int
    R: int = 1
    base_seed: int = 0
    lambdas: list[float] | None = None
    family: str = "gaussian"
    rotation_seed: int | None = None
    data: str | None = None
    data_format: str | None = None
    d: int | None = None
    q: int | None = None
    gamma_tilde: float | None = None
    schedule: Schedule | None = None
    normalizer: Normalizer | None = None
    checkpoints: list[int] = field(default_factory=list)
    diagnostics: bool = False
    threads: int | None = None
    output: dict = field(default_factory=dict)
    constants: dict = field(default_factory=lambda: dict(DEFAULT_CONSTANTS))
    sweep: dict | None = None
    spec: CovSpec | None = field(default=None, repr=False)
    source_path: str | None = None

    @property
    def synthetic(self) -> bool:
        return self.spec is not None

    @property
    def gap_free(self) -> bool:
        return self.q is not None and self.q != self.p

    @property
    def target_q(self) -> int:
        return self.p if self.q is None else self.q

    @property
    def gamma(self) -> float | None:
        return None if self.spec is None else self.spec.gamma

    @property
    def seeds(self) -> list[int]:
        return list(range(self.base_seed, self.base_seed + self.R))

    def echo(self) -> dict:
        """Plain-data view of the validated config, for JSON summaries."""
        out = {}
        for f in fields(self):
            if f.name in ("spec",):
                continue
            v = getattr(self, f.name)
            if isinstance(v, (Schedule, Normalizer)):
                v = v.to_dict()
            out[f.name] = v
        return out


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = None if mark is None else mark.line + 1
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"{path}: {problem}", line=line) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a mapping", line=1)
    return raw


def parse_config(path, env: dict | None = None) -> ExperimentConfig:
    """Read, default-fill and validate a YAML experiment file."""
    raw = load_yaml(path)
    cfg = build_config(raw, env=env)
    cfg.source_path = str(path)
    return cfg


def _int(raw, key, default=None, minimum=None):
    v = raw.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ValidationError(f"{key} must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ValidationError(f"{key} must be >= {minimum}, got {v}")
    return int(v)


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def build_config(raw: dict, env: dict | None = None) -> ExperimentConfig:
    """Validate a raw mapping (already parsed) into an :class:`ExperimentConfig`."""
    env = os.environ if env is None else env
    raw = dict(raw)
    _reject_unknown(raw, TOP_LEVEL_KEYS, "config")

    constants = dict(DEFAULT_CONSTANTS)
    user_constants = raw.get("constants") or {}
    if not isinstance(user_constants, dict):
        raise ValidationError("constants must be a mapping")
    _reject_unknown(user_constants, set(DEFAULT_CONSTANTS), "constants")
    for k, v in user_constants.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ValidationError(f"constants.{k} must be a number")
        constants[k] = float(v)
    if not 0 < constants["delta"] < 1:
        raise ValidationError("constants.delta must lie in (0, 1)")
    if constants["mu"] < 1:
        raise ValidationError("constants.mu must be >= 1")

    if "p" not in raw:
        raise ValidationError("p is required")
    p = _int(raw, "p", minimum=1)
    n_steps = _int(raw, "n_steps", minimum=0)
    R = _int(raw, "R", 1)
    if R is None or R < 1:
        raise ValidationError("R must be >= 1")
    base_seed = _int(raw, "base_seed", 0)
    if "OJA_SEED" in env:
        try:
            base_seed = int(env["OJA_SEED"])
        except ValueError:
            raise ValidationError(f"OJA_SEED must be an integer, got {env['OJA_SEED']!r}") from None
    threads = _int(raw, "threads", None, minimum=1)
    if "OJA_THREADS" in env:
        try:
            threads = int(env["OJA_THREADS"])
        except ValueError:
            raise ValidationError("OJA_THREADS must be an integer") from None
        if threads < 1:
            raise ValidationError("OJA_THREADS must be >= 1")

    lambdas = raw.get("lambdas")
    data = raw.get("data")
    if (lambdas is None) == (data is None):
        raise ValidationError("exactly one of lambdas (synthetic) or data (real) is required")
    q = _int(raw, "q", None, minimum=1)
    gamma_tilde = raw.get("gamma_tilde")
    family = raw.get("family", "gaussian")
    if family not in FAMILIES:
        raise ValidationError(f"family must be one of {FAMILIES}")

    spec = None
    d = _int(raw, "d", None, minimum=2)
    if lambdas is not None:
        if not isinstance(lambdas, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in lambdas
        ):
            raise ValidationError("lambdas must be a list of numbers")
        lam = np.asarray(lambdas, dtype=float)
        if d is not None and d != lam.size:
            raise ValidationError(f"d={d} does not match len(lambdas)={lam.size}")
        d = lam.size
        if not 1 <= p < d:
            raise ValidationError(f"need 1 <= p < d, got p={p}, d={d}")
        if q is not None:
            if not p <= q < d:
                raise ValidationError(f"gap-free mode requires p <= q < d, got q={q}")
        if q is not None and q != p:
            if gamma_tilde is None:
                gamma_tilde = float(lam[p - 1] - lam[q])
            try:
                check_gamma_tilde(lam, p, q, float(gamma_tilde))
            except ThresholdOutOfRange as exc:
                raise ValidationError(f"gamma_tilde not admissible: {exc}") from None
        elif gamma_tilde is not None:
            raise ValidationError("gamma_tilde requires a gap-free target q > p")
        try:
            spec = make_spec(lam, p, rotation_seed=raw.get("rotation_seed"), family=family,
                             q=q if q is not None and q != p else None)
        except GapViolation as exc:
            raise ValidationError(f"eigengap invariant violated: {exc}") from None
        if n_steps is None:
            raise ValidationError("n_steps is required in synthetic mode")
    else:
        if q is not None or gamma_tilde is not None:
            raise ValidationError("gap-free settings need a known spectrum")

    gamma_ref = None
    if spec is not None:
        gamma_ref = float(gamma_tilde) if gamma_tilde is not None else spec.gamma

    schedule = _build_schedule(raw.get("schedule", "harmonic"), constants, gamma_ref, d, p,
                               lambdas)
    try:
        normalizer = normalizer_from_dict(raw.get("normalizer", "qr"))
    except TypeError as exc:
        raise ValidationError(f"normalizer: {exc}") from None

    checkpoints = raw.get("checkpoints")
    if checkpoints is None:
        checkpoints = geometric_checkpoints(n_steps) if n_steps is not None else []
    else:
        if not isinstance(checkpoints, list) or not all(
            isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in checkpoints
        ):
            raise ValidationError("checkpoints must be a list of nonnegative integers")
        if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
            raise ValidationError("checkpoints must be sorted ascending without repeats")
        if n_steps is not None and (not checkpoints or checkpoints[-1] != n_steps):
            raise ValidationError("the last checkpoint must equal n_steps")

    output = raw.get("output") or {}
    if not isinstance(output, dict):
        raise ValidationError("output must be a mapping")
    _reject_unknown(output, OUTPUT_KEYS, "output")

    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or not all(isinstance(v, list) and v for v in sweep.values()):
            raise ValidationError("sweep must map keys to non-empty lists")

    return ExperimentConfig(
        p=p,
        n_steps=n_steps,
        R=R,
        base_seed=base_seed,
        lambdas=None if lambdas is None else [float(v) for v in lambdas],
        family=family,
        rotation_seed=raw.get("rotation_seed"),
        data=None if data is None else str(data),
        data_format=raw.get("data_format"),
        d=d,
        q=q,
        gamma_tilde=None if gamma_tilde is None else float(gamma_tilde),
        schedule=schedule,
        normalizer=normalizer,
        checkpoints=list(checkpoints),
        diagnostics=bool(raw.get("diagnostics", False)),
        threads=threads,
        output=dict(output),
        constants=constants,
        sweep=sweep,
        spec=spec,
    )


def _build_schedule(sched, constants, gamma_ref, d, p, lambdas) -> Schedule:
    if isinstance(sched, str):
        sched = {"kind": sched}
    if not isinstance(sched, dict) or "kind" not in sched:
        raise ValidationError("schedule must be a name or a mapping with 'kind'")
    sched = dict(sched)
    kind = sched["kind"]
    if kind not in SCHEDULE_KEYS:
        raise ValidationError(f"unknown schedule kind {kind!r}")
    _reject_unknown(sched, SCHEDULE_KEYS[kind] | {"kind"}, f"schedule ({kind})")
    if kind in ("harmonic", "two_phase"):
        sched.setdefault("c_eta", constants["c_eta"])
        if "gamma_ref" not in sched:
            if gamma_ref is None:
                raise ValidationError(f"{kind} schedule needs gamma_ref when the spectrum is unknown")
            sched["gamma_ref"] = gamma_ref
    if kind == "two_phase":
        sched.setdefault("c_o_prime", constants["c_o_prime"])
        sched.setdefault("delta", constants["delta"])
        if "d" not in sched:
            if d is None:
                raise ValidationError("two_phase schedule needs d")
            sched["d"] = d
        if "n_o" not in sched:
            if lambdas is None:
                raise ValidationError("two_phase schedule needs n_o when the spectrum is unknown")
            sched["n_o"] = N_o_formula(p, default_B(lambdas, constants["mu"]), sched["delta"],
                                       sched["gamma_ref"], sched["d"], constants["c_o"])
    if kind == "constant" and "eta_o" not in sched:
        raise ValidationError("constant schedule needs eta_o")
    try:
        return schedule_from_dict(sched)
    except TypeError as exc:
        raise ValidationError(f"schedule: {exc}") from None


def apply_override(raw: dict, dotted: str, value: Any) -> dict:
    """Return a copy of ``raw`` with ``a.b.c = value`` set (for sweeps)."""
    out = yaml.safe_load(yaml.safe_dump(raw))
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = node.get(part, NESTED_DEFAULTS.get(part) if node is out else None)
        if isinstance(child, str):
            child = {"kind": child}
        if child is None:
            child = {}
        node[part] = child
        node = child
    node[parts[-1]] = value
    return out
