"""ELBO and importance-weighted bound estimators, and sweeps over ``K``.

``Y_K`` denotes the log of a ``K``-sample average of importance ratios and
``X_K = exp(Y_K)`` the average itself. Blocks of ``K`` are always taken as
consecutive disjoint runs of a batch, so antithetic pairs stay together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import InvalidBatchSpec, OracleUnavailable
from .models import Model, ProposalParams, log_weights_from_noise, sample_log_weights, standard_normal_draws
from .rng import derive_rng
from .stats import Coupling, LogWeightBatch, log_sum_exp


@dataclass(frozen=True)
class EstimatorConfig:
    k: int = 1
    replications: int = 1000
    seed: int = 0
    coupling: Coupling = Coupling.IID

    def __post_init__(self):
        if int(self.k) < 1 or int(self.replications) < 1:
            raise InvalidBatchSpec(f"need k >= 1 and replications >= 1, got {self.k}, {self.replications}")
        object.__setattr__(self, "coupling", Coupling(self.coupling))

    @property
    def total_samples(self) -> int:
        return int(self.k) * int(self.replications)


@dataclass(frozen=True)
class EstimateResult:
    value: float
    std_error: float
    k: int
    replications: int


def _summarise(values: np.ndarray, k: int) -> EstimateResult:
    r = values.shape[0]
    se = float(np.std(values, ddof=1) / math.sqrt(r)) if r > 1 else 0.0
    return EstimateResult(value=float(np.mean(values)), std_error=se, k=k, replications=r)


def elbo_estimate(batch: LogWeightBatch) -> EstimateResult:
    """Mean log-weight and its standard error (the ``K = 1`` bound)."""
    return _summarise(batch.log_weights, 1)


def iwlb_samples(batch: LogWeightBatch, k: int) -> np.ndarray:
    """``Y_K`` for each consecutive block of ``k`` log-weights.

    Raises
    ------
    InvalidBatchSpec
        If ``len(batch)`` is not a multiple of ``k``, or if an odd ``k > 1``
        would split antithetic pairs across blocks.
    """
    k = int(k)
    n = len(batch)
    if k < 1 or n % k:
        raise InvalidBatchSpec(f"batch length {n} is not divisible by k={k}")
    if batch.coupling is Coupling.ANTITHETIC and k > 1 and k % 2:
        raise InvalidBatchSpec(f"odd k={k} would split antithetic pairs")
    if k == 1:
        return batch.log_weights.copy()
    blocks = batch.log_weights.reshape(n // k, k)
    return log_sum_exp(blocks, axis=1) - math.log(k)


def iwlb_estimate(model: Model, q: Optional[ProposalParams], cfg: EstimatorConfig) -> EstimateResult:
    """Monte Carlo estimate of the ``K``-sample bound from ``cfg.replications`` blocks."""
    batch = sample_log_weights(model, q, cfg.total_samples, cfg.seed, cfg.coupling)
    return _summarise(iwlb_samples(batch, cfg.k), int(cfg.k))


def oracle_log_evidence(model) -> float:
    fn = getattr(model, "exact_log_evidence", None)
    if fn is None:
        raise OracleUnavailable(f"{type(model).__name__} has no closed-form evidence")
    return float(fn())


class RunningMoments:
    """Mean and centred second moment, merged chunk-wise (Chan et al.)."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64).ravel()
        nb = values.size
        if nb == 0:
            return
        mb = float(np.mean(values))
        db = values - mb
        m2b = float(np.dot(db, db))
        n = self.n + nb
        delta = mb - self.mean
        self.mean += delta * nb / n
        self.m2 += m2b + delta * delta * self.n * nb / n
        self.n = n

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.var / self.n) if self.n > 0 else 0.0


@dataclass(frozen=True)
class SweepRow:
    """One ``K`` of a sweep.

    ``gap`` is ``log p(v) - mean(Y_K)``. ``gap_cv`` estimates the same
    quantity as ``mean(X_K / p(v) - 1 - log(X_K / p(v)))``, which uses the
    known ``E[X_K] = p(v)`` as a control variate. ``var_x`` is the variance
    of ``X_K / p(v)``.
    """

    k: int
    n_blocks: int
    estimate: float
    std_error: float
    gap: float
    gap_cv: float
    gap_cv_std_error: float
    var_y: float
    var_x: float

    CSV_FIELDS = ("k", "n_blocks", "estimate", "std_error", "gap", "gap_cv",
                  "gap_cv_std_error", "var_x", "var_y")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.CSV_FIELDS}


@dataclass(frozen=True)
class PairedDifference:
    """``mean(Y_hi) - mean(Y_lo)`` over replications sharing the same weights."""

    k_lo: int
    k_hi: int
    mean_diff: float
    std_error: float


@dataclass(frozen=True)
class SweepResult:
    rows: List[SweepRow]
    paired: List[PairedDifference]
    log_evidence: float
    replications: int
    pool_size: int
    seed: int
    coupling: Coupling = Coupling.IID

    def row(self, k: int) -> SweepRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    def loglog_slope(self, k_min: int, k_max: int, column: str = "gap") -> float:
        """Least-squares slope of ``log(column)`` against ``log k`` on ``[k_min, k_max]``."""
        pts = [(r.k, getattr(r, column)) for r in self.rows if k_min <= r.k <= k_max]
        ks = np.log([p[0] for p in pts])
        gs = np.array([p[1] for p in pts])
        if len(pts) < 2 or np.any(gs <= 0):
            return math.nan
        return float(np.polyfit(ks, np.log(gs), 1)[0])


def _lcm(values: Sequence[int]) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), values, 1)


def bias_variance_sweep(
    model: Model,
    q: Optional[ProposalParams],
    k_grid: Sequence[int],
    budget: int,
    seed: int,
    coupling: Union[Coupling, str] = Coupling.IID,
    *,
    max_chunk_samples: int = 1 << 22,
) -> SweepResult:
    """Gap, ``var(Y_K)`` and ``var(X_K)`` for every ``k`` in ``k_grid``.

    The budget is split into replications of one shared pool of
    ``lcm(k_grid)`` weights; each pool is re-blocked for every ``k``, so all
    ``k`` see common random numbers. Pools are generated in chunks, chunk
    ``c`` drawing from ``derive_rng(seed, "sweep", c)``.

    Raises
    ------
    OracleUnavailable
        If the model has no closed-form log-evidence.
    InvalidBatchSpec
        If ``budget`` is not a multiple of ``lcm(k_grid)``.
    """
    coupling = Coupling(coupling)
    log_p = oracle_log_evidence(model)
    ks = sorted({int(k) for k in k_grid})
    if not ks or ks[0] < 1:
        raise InvalidBatchSpec("k_grid must contain positive integers")
    if coupling is Coupling.ANTITHETIC and any(k > 1 and k % 2 for k in ks):
        raise InvalidBatchSpec("odd k > 1 would split antithetic pairs")
    pool = _lcm(ks)
    if coupling is Coupling.ANTITHETIC and pool % 2:
        pool *= 2
    budget = int(budget)
    if budget < pool or budget % pool:
        raise InvalidBatchSpec(f"budget {budget} is not a positive multiple of pool size {pool}")
    reps = budget // pool
    per_chunk = max(1, max_chunk_samples // pool)
    dim = getattr(model, "d_h", 1)

    y_mom = {k: RunningMoments() for k in ks}
    x_mom = {k: RunningMoments() for k in ks}
    cv_mom = {k: RunningMoments() for k in ks}
    diff_mom = [RunningMoments() for _ in ks[1:]]

    done = 0
    chunk = 0
    while done < reps:
        r = min(per_chunk, reps - done)
        eps = standard_normal_draws(derive_rng(seed, "sweep", chunk), r * pool, dim, coupling)
        y = log_weights_from_noise(model, q, eps).reshape(r, pool) - log_p
        rep_means = []
        for k in ks:
            blocks = y.reshape(r, pool // k, k)
            m = blocks.max(axis=2, keepdims=True)
            yk = (np.log(np.mean(np.exp(blocks - m), axis=2, keepdims=True)) + m)[..., 0]
            xk = np.exp(yk)
            y_mom[k].update(yk)
            x_mom[k].update(xk)
            cv_mom[k].update((xk - 1.0) - yk)
            rep_means.append(yk.mean(axis=1))
        for i, dm in enumerate(diff_mom):
            dm.update(rep_means[i + 1] - rep_means[i])
        done += r
        chunk += 1

    rows = []
    for k in ks:
        ym = y_mom[k]
        rows.append(SweepRow(
            k=k,
            n_blocks=ym.n,
            estimate=ym.mean + log_p,
            std_error=ym.std_error,
            gap=-ym.mean,
            gap_cv=cv_mom[k].mean,
            gap_cv_std_error=cv_mom[k].std_error,
            var_y=ym.var,
            var_x=x_mom[k].var,
        ))
    paired = [
        PairedDifference(k_lo=ks[i], k_hi=ks[i + 1], mean_diff=dm.mean, std_error=dm.std_error)
        for i, dm in enumerate(diff_mom)
    ]
    return SweepResult(rows=rows, paired=paired, log_evidence=log_p, replications=reps,
                       pool_size=pool, seed=int(seed), coupling=coupling)
