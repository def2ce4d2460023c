"""Primitive statistics on batches of log likelihood-ratio samples.

A :class:`LogWeightBatch` holds ``y = log(p/q)`` values; the ratio itself,
``x = exp(y)``, is only ever materialised after subtracting a log
normaliser so that it stays representable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats as sps

from .errors import EmptyBatch, InvalidNormalizer, NonFiniteInput

ArrayLike = Union[Sequence[float], np.ndarray]

# Slack for comparisons between quantities that are equal in exact arithmetic,
# scaled by the magnitude of the values involved.
PROP1_TOL = 1e-12


class Coupling(str, enum.Enum):
    """How the latent draws inside a batch are jointly generated."""

    IID = "iid"
    ANTITHETIC = "antithetic"
    STRATIFIED = "stratified"


class Scale(str, enum.Enum):
    X = "x_scale"
    Y = "y_scale"


def _as_checked_array(values: ArrayLike) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyBatch("expected at least one value")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("values must be finite (got NaN or infinity)")
    return arr


@dataclass(frozen=True)
class LogWeightBatch:
    """Immutable batch of finite log importance weights.

    Parameters
    ----------
    log_weights : array_like
        One-dimensional natural-log weights ``log p(v, h) - log q(h)``.
    seed : int
        Seed the batch was drawn with (0 for hand-built batches).
    coupling : Coupling
        Joint structure of the draws. Antithetic batches store each pair in
        adjacent positions ``(2j, 2j + 1)``.
    """

    log_weights: np.ndarray
    seed: int = 0
    coupling: Coupling = Coupling.IID

    def __post_init__(self):
        arr = _as_checked_array(self.log_weights).ravel().copy()
        arr.setflags(write=False)
        object.__setattr__(self, "log_weights", arr)
        object.__setattr__(self, "coupling", Coupling(self.coupling))
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self) -> int:
        return self.log_weights.shape[0]

    @property
    def coupling_label(self) -> str:
        return self.coupling.value


def log_sum_exp(values: ArrayLike, axis: Optional[int] = None):
    """Return ``log(sum(exp(values)))`` computed by shifting with the maximum.

    With ``axis`` given, the reduction is taken along that axis and an array
    is returned.
    """
    arr = _as_checked_array(values)
    m = np.max(arr, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(arr - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def log_mean_exp(values: ArrayLike, axis: Optional[int] = None):
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size if axis is None else arr.shape[axis]
    return log_sum_exp(arr, axis=axis) - math.log(n)


def empirical_median(values: ArrayLike) -> float:
    """Median with the midpoint rule for an even number of values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyBatch("median of an empty sequence")
    return float(np.median(arr))


def median_interval(values: ArrayLike, level: float = 0.99) -> tuple:
    """Distribution-free order-statistic confidence interval for the median.

    Uses the binomial(n, 1/2) law of the number of values below the median.
    Returns ``(-inf, inf)`` sides when ``n`` is too small for the level.
    """
    arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = arr.size
    if n == 0:
        raise EmptyBatch("median interval of an empty sequence")
    alpha = 1.0 - level
    j = int(sps.binom.ppf(alpha / 2.0, n, 0.5))
    if j < 1:
        return (-math.inf, math.inf)
    return (float(arr[j - 1]), float(arr[n - j]))


@dataclass(frozen=True)
class DispersionStats:
    """Location and spread of a sample on one scale.

    ``lp_dev[1]`` is the mean absolute deviation about the mean and
    ``lp_dev[2]`` is the standard deviation (``n - 1`` denominator), so
    ``std == lp_dev[2]`` and ``mean_abs_dev == lp_dev[1]``.
    """

    mean: float
    median: float
    std: float
    mean_abs_dev: float
    lp_dev: Mapping[int, float]
    n: int
    scale: Scale = Scale.Y
    log_normalizer: float = 0.0
    std_error: float = field(default=0.0)

    def dev(self, p: int) -> float:
        return self.lp_dev[p]


def stats_from_values(
    values: ArrayLike, scale: Scale = Scale.Y, log_normalizer: float = 0.0
) -> DispersionStats:
    """Plug-in statistics of a raw value array (already on the target scale)."""
    arr = _as_checked_array(values).ravel()
    n = arr.size
    mean = float(np.mean(arr))
    median = float(np.median(arr))
    d = arr - mean
    mad = float(np.mean(np.abs(d)))
    std = float(math.sqrt(np.dot(d, d) / (n - 1))) if n > 1 else 0.0
    return DispersionStats(
        mean=mean,
        median=median,
        std=std,
        mean_abs_dev=mad,
        lp_dev={1: mad, 2: std},
        n=n,
        scale=Scale(scale),
        log_normalizer=float(log_normalizer),
        std_error=std / math.sqrt(n),
    )


def dispersion_stats(
    batch: LogWeightBatch,
    scale: Union[Scale, str] = Scale.Y,
    normalizer: Optional[float] = None,
    *,
    log_normalizer: Optional[float] = None,
) -> DispersionStats:
    """Dispersion statistics of a batch on the X (ratio) or Y (log) scale.

    Parameters
    ----------
    batch : LogWeightBatch
    scale : Scale or {"x_scale", "y_scale"}
    normalizer : float, optional
        Positive constant ``c``; statistics are computed for ``X / c`` (or
        ``Y - log c``). Defaults to 1.
    log_normalizer : float, optional
        ``log c`` given directly, for normalisers too large to represent.
        Mutually exclusive with ``normalizer``.

    Raises
    ------
    InvalidNormalizer
        If ``normalizer`` is not a finite positive number.
    """
    scale = Scale(scale)
    if normalizer is not None and log_normalizer is not None:
        raise InvalidNormalizer("give either normalizer or log_normalizer, not both")
    if normalizer is not None:
        c = float(normalizer)
        if not (math.isfinite(c) and c > 0.0):
            raise InvalidNormalizer(f"normalizer must be finite and > 0, got {normalizer!r}")
        log_c = math.log(c)
    elif log_normalizer is not None:
        log_c = float(log_normalizer)
        if not math.isfinite(log_c):
            raise InvalidNormalizer("log_normalizer must be finite")
    else:
        log_c = 0.0

    y = batch.log_weights - log_c
    if scale is Scale.X:
        with np.errstate(over="ignore"):
            y = np.exp(y)
        if not np.all(np.isfinite(y)):
            raise NonFiniteInput("exp(y - log c) overflowed; supply a larger normalizer")
    return stats_from_values(y, scale, log_c)
