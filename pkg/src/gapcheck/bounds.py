"""Dispersion-based upper bounds on the variational gap.

For a positive ratio ``X`` with ``Y = log X``, the gap
``log E[X] - E[log X]`` is bounded by

    C_X / (mu_X - C_X) + C_Y,        whenever mu_X > C_X,

where ``C_X >= |mu_X - nu_X|`` and ``C_Y >= |mu_Y - nu_Y|`` bound the
mean-median distances on each scale. Any ``L_p`` deviation about the mean
is a valid choice of ``C``; with standard deviations and ``mu_X = p(v)``
the same expression is the sigma-based bound, gated on ``sigma_X < p(v)``.

A bound whose premise fails is reported as ``None`` together with a false
applicability flag, never as a number.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import InvalidDispersion, InvalidEvidence, UnsupportedOrder
from .estimators import EstimatorConfig, iwlb_samples, oracle_log_evidence
from .models import GaussianLinearModel, LogNormalRatioModel, Model, ProposalParams, exact_elbo_gap, sample_log_weights
from .rng import derive_seed
from .stats import PROP1_TOL, DispersionStats, LogWeightBatch, Scale, log_mean_exp, median_interval, stats_from_values

SUPPORTED_ORDERS = (1, 2)


def prop1_check(stats: DispersionStats, p: int) -> Tuple[float, float, bool]:
    """Check ``|mean - median| <= ||X - mean||_p`` on a computed sample.

    Returns ``(lhs, rhs, holds)``. On an empirical distribution the
    inequality is a theorem, so ``holds`` is false only through a bug.
    """
    if p not in SUPPORTED_ORDERS:
        raise UnsupportedOrder(f"order p must be one of {SUPPORTED_ORDERS}, got {p!r}")
    lhs = abs(stats.mean - stats.median)
    rhs = stats.lp_dev[p]
    tol = PROP1_TOL * max(1.0, abs(stats.mean), abs(stats.median))
    return lhs, rhs, bool(lhs <= rhs + tol)


def _check_nonneg(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise InvalidDispersion(f"{name} must be finite and >= 0, got {value!r}")
    return value


def prop2_bound(mu_x: float, c_x: float, c_y: float) -> Optional[float]:
    """``c_x / (mu_x - c_x) + c_y``, or ``None`` when ``mu_x <= c_x``."""
    c_x = _check_nonneg("c_x", c_x)
    c_y = _check_nonneg("c_y", c_y)
    mu_x = float(mu_x)
    if not (math.isfinite(mu_x) and mu_x > 0.0):
        raise InvalidDispersion(f"mu_x must be finite and > 0, got {mu_x!r}")
    if mu_x <= c_x:
        return None
    return c_x / (mu_x - c_x) + c_y


def corollary_bound(p_v: float, sigma_x: float, sigma_y: float) -> Optional[float]:
    """Sigma-based bound for an unbiased estimator of ``p_v``; ``None`` if ``sigma_x >= p_v``."""
    p_v = float(p_v)
    if not (math.isfinite(p_v) and p_v > 0.0):
        raise InvalidEvidence(f"p_v must be finite and > 0, got {p_v!r}")
    sigma_x = _check_nonneg("sigma_x", sigma_x)
    sigma_y = _check_nonneg("sigma_y", sigma_y)
    if sigma_x >= p_v:
        return None
    return sigma_x / (p_v - sigma_x) + sigma_y


def _std_of_std(values: np.ndarray, std: float) -> float:
    # Delta method: Var(s^2) ~ (m4 - s^4) / n, d s = d s^2 / (2 s).
    n = values.size
    if n < 2 or std == 0.0:
        return 0.0
    d = values - values.mean()
    m4 = float(np.mean(d**4))
    return math.sqrt(max(m4 - std**4, 0.0) / n) / (2.0 * std)


@dataclass(frozen=True)
class GapBoundReport:
    """Estimated gap, dispersion statistics and bound values for one run.

    ``mu_x``, ``sigma_x`` and the ``prop1_cx`` entries refer to ``X / c``
    with ``c = exp(log_normalizer)``; when the exact evidence is known it
    is the default normaliser, so ``mu_x`` is then close to 1. The gap
    and both bounds do not depend on ``c``.
    """

    gap: float
    gap_std_error: float
    gap_exact: Optional[float]
    prop1_cx: Dict[int, float]
    prop1_cy: Dict[int, float]
    prop2_bound: Optional[float]
    corollary_bound: Optional[float]
    mu_x: float
    sigma_x: float
    sigma_y: float
    mu_y: float
    median_x: float
    median_y: float
    applicable_prop2: bool
    applicable_corollary: bool
    p_v: float
    log_evidence: float
    log_normalizer: float
    n: int
    k: int
    seed: int
    coupling: str
    mode: str
    error_bars: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["prop1_cx"] = {str(p): v for p, v in self.prop1_cx.items()}
        out["prop1_cy"] = {str(p): v for p, v in self.prop1_cy.items()}
        return out


def report_from_log_ratios(
    y: np.ndarray,
    log_evidence: float,
    *,
    log_normalizer: Optional[float] = None,
    gap_exact: Optional[float] = None,
    k: int = 1,
    seed: int = 0,
    coupling: str = "iid",
    mode: str = "sampling",
) -> GapBoundReport:
    """Assemble a report from samples of ``Y`` (or ``Y_K``) and a log-evidence.

    ``C_X`` and ``C_Y`` default to the mean absolute deviations (the
    ``p = 1`` member of the family); the sigma-based bound is always
    reported alongside.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    log_c = float(log_evidence if log_normalizer is None else log_normalizer)
    ys = stats_from_values(y - log_c, Scale.Y, log_c)
    x = np.exp(y - log_c)
    xs = stats_from_values(x, Scale.X, log_c)
    p_v = math.exp(log_evidence - log_c)
    gap = float(log_evidence - np.mean(y))

    p2 = prop2_bound(xs.mean, xs.lp_dev[1], ys.lp_dev[1])
    cor = corollary_bound(p_v, xs.std, ys.std)
    error_bars = {
        "mu_x_std_error": xs.std_error,
        "mu_y_std_error": ys.std_error,
        "sigma_x_std_error": _std_of_std(x, xs.std),
        "sigma_y_std_error": _std_of_std(y, ys.std),
        "median_x_interval_99": list(median_interval(x, 0.99)),
        "median_y_interval_99": list(median_interval(y - log_c, 0.99)),
        "gap_interval_3sigma": [gap - 3 * ys.std_error, gap + 3 * ys.std_error],
    }
    return GapBoundReport(
        gap=gap,
        gap_std_error=ys.std_error,
        gap_exact=gap_exact,
        prop1_cx=dict(xs.lp_dev),
        prop1_cy=dict(ys.lp_dev),
        prop2_bound=p2,
        corollary_bound=cor,
        mu_x=xs.mean,
        sigma_x=xs.std,
        sigma_y=ys.std,
        mu_y=ys.mean,
        median_x=xs.median,
        median_y=ys.median,
        applicable_prop2=p2 is not None,
        applicable_corollary=cor is not None,
        p_v=p_v,
        log_evidence=float(log_evidence),
        log_normalizer=log_c,
        n=int(y.size),
        k=int(k),
        seed=int(seed),
        coupling=str(coupling),
        mode=mode,
        error_bars=error_bars,
    )


def empirical_population_report(batch: Union[LogWeightBatch, np.ndarray]) -> GapBoundReport:
    """Treat the batch itself as the distribution of ``Y``.

    The evidence is then the empirical mean of ``X``, the gap is
    ``log mean(X) - mean(Y)`` and every statistic is exact for that finite
    population, so the reported bounds hold with no Monte Carlo slack.
    """
    y = batch.log_weights if isinstance(batch, LogWeightBatch) else np.asarray(batch, dtype=np.float64)
    log_p = log_mean_exp(y)
    rep = report_from_log_ratios(y, log_p, mode="population",
                                 seed=getattr(batch, "seed", 0),
                                 coupling=getattr(batch, "coupling_label", "iid"))
    return rep


@dataclass(frozen=True)
class ClosedFormBounds:
    gap: float
    mu_x: float
    c_x: float
    c_y: float
    prop2_bound: Optional[float]
    corollary_bound: Optional[float]


def lognormal_closed_form(model: LogNormalRatioModel, order: int = 2) -> ClosedFormBounds:
    """Exact gap and bounds for a log-normal ratio, with ``C`` from ``L_order``."""
    if order not in SUPPORTED_ORDERS:
        raise UnsupportedOrder(f"order must be one of {SUPPORTED_ORDERS}, got {order!r}")
    c_x = model.sigma_x if order == 2 else model.mad_x
    c_y = model.sigma_y if order == 2 else model.mad_y
    return ClosedFormBounds(
        gap=model.gap,
        mu_x=model.mu_x,
        c_x=c_x,
        c_y=c_y,
        prop2_bound=prop2_bound(model.mu_x, c_x, c_y),
        corollary_bound=corollary_bound(model.mu_x, model.sigma_x, model.sigma_y),
    )


def _closed_form_gap(model: Model, q: Optional[ProposalParams], k: int) -> Optional[float]:
    if k != 1:
        return None
    if isinstance(model, LogNormalRatioModel):
        return model.gap
    if isinstance(model, GaussianLinearModel):
        return exact_elbo_gap(model, q)
    return None


def diagnose(
    model: Model,
    q: Optional[ProposalParams],
    cfg: EstimatorConfig,
    *,
    brute_force_samples: Optional[int] = None,
    log_normalizer: Optional[float] = None,
) -> GapBoundReport:
    """Estimate the gap of ``X_K`` and evaluate every bound on it.

    Draws ``cfg.k * cfg.replications`` weights and reduces them to
    ``cfg.replications`` values of ``Y_K``. The log-evidence comes from the
    model's closed form; with ``brute_force_samples`` set it is instead
    estimated from that many fresh ``K = 1`` weights (an independent stream).
    """
    if brute_force_samples is None:
        log_p = oracle_log_evidence(model)
        mode = "sampling"
    else:
        ref = sample_log_weights(model, q, int(brute_force_samples),
                                 derive_seed(cfg.seed, "diagnose-oracle"), "iid")
        log_p = log_mean_exp(ref.log_weights)
        mode = "sampling-bruteforce"
    batch = sample_log_weights(model, q, cfg.total_samples, cfg.seed, cfg.coupling)
    yk = iwlb_samples(batch, cfg.k)
    return report_from_log_ratios(
        yk,
        log_p,
        log_normalizer=log_normalizer,
        gap_exact=_closed_form_gap(model, q, int(cfg.k)),
        k=int(cfg.k),
        seed=cfg.seed,
        coupling=cfg.coupling.value,
        mode=mode,
    )
