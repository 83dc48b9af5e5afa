"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class GChainError(Exception):
    """Base class for all library errors."""


class ModelError(GChainError, ValueError):
    """Invalid model parameters, symbols or windows."""


class CertificationError(GChainError):
    """The model's minorization product could not be certified positive."""


class ThresholdOverflow(GChainError, RuntimeError):
    """A uniform fell outside the envelope mass reachable inside a confirmed block."""


class PreconditionError(GChainError, ValueError):
    """An estimator or transform was called outside its preconditions."""


class InsufficientData(PreconditionError):
    """Too few blocks, renewals or replicas for the requested statistic."""


class LagTooLarge(PreconditionError):
    pass


class NonCenteredObservable(PreconditionError):
    pass


class ZeroMean(PreconditionError):
    pass
