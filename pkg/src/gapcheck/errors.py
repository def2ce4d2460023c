"""Exception hierarchy.

Every error raised by the library derives from :class:`GapcheckError` and
carries a short ``category`` string, which the CLI uses both for its
machine-readable error line and for choosing an exit code.
"""

from __future__ import annotations


class GapcheckError(Exception):
    category = "error"


class EmptyBatch(GapcheckError, ValueError):
    category = "empty_batch"


class NonFiniteInput(GapcheckError, ValueError):
    category = "non_finite_input"


class InvalidNormalizer(GapcheckError, ValueError):
    category = "invalid_normalizer"


class InvalidBatchSpec(GapcheckError, ValueError):
    category = "invalid_batch_spec"


class ShapeError(GapcheckError, ValueError):
    category = "shape_error"


class NumericalFailure(GapcheckError, ArithmeticError):
    category = "numerical_failure"


class OracleUnavailable(GapcheckError):
    category = "oracle_unavailable"


class UnsupportedOrder(GapcheckError, ValueError):
    category = "unsupported_order"


class InvalidDispersion(GapcheckError, ValueError):
    category = "invalid_dispersion"


class InvalidEvidence(GapcheckError, ValueError):
    category = "invalid_evidence"


class DivergenceDetected(GapcheckError, RuntimeError):
    category = "divergence"


class InsufficientData(GapcheckError, ValueError):
    category = "insufficient_data"


class ConfigParseError(GapcheckError, ValueError):
    category = "config_error"
