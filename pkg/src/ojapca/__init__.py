"""Streaming principal subspace estimation with Oja's algorithm."""

from .engine import (
    QR,
    Constant,
    Deferred,
    Harmonic,
    OjaState,
    Polar,
    TrialRecord,
    TwoPhase,
    init_state,
    rate,
    run,
    step,
)
from .estimator import OjaPCA
from .samplers import CovSpec, make_spec, stream

__all__ = [
    "QR", "Polar", "Deferred", "Constant", "Harmonic", "TwoPhase",
    "OjaState", "TrialRecord", "init_state", "rate", "run", "step",
    "CovSpec", "make_spec", "stream", "OjaPCA",
]
