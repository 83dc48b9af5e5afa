"""Exact regenerative simulation of binary chains with infinite memory, their renewal
structure, and limiting-variance estimation for additive functionals."""

from __future__ import annotations

__version__ = "0.1.0"

from ._backend import kernels as _kernels
from .clt import (
    ObservableF,
    VarianceEstimate,
    clt_test,
    consistency_check,
    variance_autocov,
    variance_block,
    variance_replication,
    wald_check,
)
from .errors import (
    CertificationError,
    GChainError,
    InsufficientData,
    LagTooLarge,
    ModelError,
    NonCenteredObservable,
    PreconditionError,
    ThresholdOverflow,
    ZeroMean,
)
from .kernel import (
    Autoregressive,
    Ising,
    MarkovOrder1,
    a_k_uniform,
    conditional_prob_envelope,
    memoryless,
    symmetric_markov,
    uniqueness_class,
    var_k,
)
from .regen import BlockSet, Trajectory, UniformStream, extract_blocks, simulate, truncated_sampler
from .renewal import DecayClass, classify_decay, gap_law_dp, rho_table, size_biased_gap

BACKEND = _kernels.BACKEND

__all__ = [
    "Autoregressive",
    "BACKEND",
    "BlockSet",
    "CertificationError",
    "DecayClass",
    "GChainError",
    "InsufficientData",
    "Ising",
    "LagTooLarge",
    "MarkovOrder1",
    "ModelError",
    "NonCenteredObservable",
    "ObservableF",
    "PreconditionError",
    "ThresholdOverflow",
    "Trajectory",
    "UniformStream",
    "VarianceEstimate",
    "ZeroMean",
    "a_k_uniform",
    "classify_decay",
    "clt_test",
    "conditional_prob_envelope",
    "consistency_check",
    "extract_blocks",
    "gap_law_dp",
    "memoryless",
    "rho_table",
    "simulate",
    "size_biased_gap",
    "symmetric_markov",
    "truncated_sampler",
    "uniqueness_class",
    "var_k",
    "variance_autocov",
    "variance_block",
    "variance_replication",
    "wald_check",
]
