"""Stochastic gradient ascent on the ELBO / IWLB over a diagonal proposal.

Gradients are pathwise: ``h = loc + exp(log_scale) * eps`` with ``eps``
standard normal, so for fixed ``eps`` the objective is a smooth function of
the proposal parameters and the returned gradient is its exact derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DivergenceDetected, InvalidBatchSpec, ShapeError
from .models import GaussianLinearModel, ProposalParams, exact_elbo_gap, exact_log_evidence, log_weights_from_noise
from .rng import derive_rng, make_rng
from .stats import log_sum_exp

DIVERGENCE_NATS = 1e3


def draw_noise(n: int, dim: int, seed: int) -> np.ndarray:
    """Standard normal noise for gradient and objective evaluation."""
    return make_rng(seed).standard_normal((int(n), int(dim)))


def _check(model, q: ProposalParams) -> None:
    if not isinstance(model, GaussianLinearModel):
        raise ShapeError("optimisation needs a GaussianLinearModel")
    if q.dim != model.d_h:
        raise ShapeError(f"proposal has dimension {q.dim}, model latent has {model.d_h}")


def reparam_objective(model: GaussianLinearModel, q: ProposalParams, eps: np.ndarray, k: int = 1) -> float:
    """Mean of ``Y_K`` over consecutive blocks of ``eps`` (fixed noise)."""
    lw = log_weights_from_noise(model, q, eps)
    if k == 1:
        return float(np.mean(lw))
    return float(np.mean(log_sum_exp(lw.reshape(-1, k), axis=1)) - math.log(k))


@dataclass(frozen=True)
class GradientEstimate:
    loc: np.ndarray
    log_scale: np.ndarray
    loc_std_error: np.ndarray
    log_scale_std_error: np.ndarray
    objective: float
    n_blocks: int

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.loc, self.log_scale])

    @property
    def std_error(self) -> np.ndarray:
        return np.concatenate([self.loc_std_error, self.log_scale_std_error])


def gradient_from_noise(model: GaussianLinearModel, q: ProposalParams, eps: np.ndarray, k: int = 1) -> GradientEstimate:
    _check(model, q)
    n = eps.shape[0]
    if k < 1 or n % k:
        raise InvalidBatchSpec(f"{n} noise rows are not divisible by k={k}")
    scale = q.scale
    h = q.loc[None, :] + scale[None, :] * eps
    g_h = model.grad_log_joint(h)
    # d log w / d log_scale: chain rule through h plus the +1 from -log q.
    g_loc = g_h
    g_ls = g_h * scale[None, :] * eps + 1.0
    lw = log_weights_from_noise(model, q, eps)
    if k > 1:
        blocks = lw.reshape(-1, k)
        w = np.exp(blocks - blocks.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        g_loc = np.einsum("bk,bkd->bd", w, g_loc.reshape(-1, k, q.dim))
        g_ls = np.einsum("bk,bkd->bd", w, g_ls.reshape(-1, k, q.dim))
        yk = log_sum_exp(blocks, axis=1) - math.log(k)
    else:
        yk = lw
    nb = g_loc.shape[0]
    ddof = 1 if nb > 1 else 0
    return GradientEstimate(
        loc=g_loc.mean(axis=0),
        log_scale=g_ls.mean(axis=0),
        loc_std_error=g_loc.std(axis=0, ddof=ddof) / math.sqrt(nb),
        log_scale_std_error=g_ls.std(axis=0, ddof=ddof) / math.sqrt(nb),
        objective=float(np.mean(yk)),
        n_blocks=nb,
    )


def elbo_gradient(model: GaussianLinearModel, q: ProposalParams, n: int, seed: int, k: int = 1) -> GradientEstimate:
    """Reparameterised gradient of the ``k``-sample bound w.r.t. ``(loc, log_scale)``.

    Uses ``n`` noise draws from ``draw_noise(n, d_h, seed)``, grouped into
    ``n // k`` blocks. ``k = 1`` is the ELBO gradient.
    """
    _check(model, q)
    if n < 1:
        raise InvalidBatchSpec(f"n must be >= 1, got {n}")
    return gradient_from_noise(model, q, draw_noise(n, q.dim, seed), k)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    gap: float
    sigma_x: float
    sigma_y: float
    loc: tuple
    log_scale: tuple


@dataclass
class FitTrace:
    records: List[TraceRecord]
    objective_history: np.ndarray
    final: ProposalParams
    k: int
    seed: int

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def csv_header(self) -> List[str]:
        d = len(self.records[0].loc) if self.records else 0
        return (["iteration", "objective", "gap", "sigma_x", "sigma_y"]
                + [f"loc_{i}" for i in range(d)] + [f"log_scale_{i}" for i in range(d)])

    def csv_rows(self) -> List[list]:
        return [[r.iteration, r.objective, r.gap, r.sigma_x, r.sigma_y, *r.loc, *r.log_scale]
                for r in self.records]


def smoothed(history: np.ndarray, window: int = 50):
    """Means and standard deviations over consecutive non-overlapping windows."""
    m = len(history) // window
    blocks = np.asarray(history[: m * window]).reshape(m, window)
    return blocks.mean(axis=1), blocks.std(axis=1, ddof=1)


def fit(
    model: GaussianLinearModel,
    q0: ProposalParams,
    steps: int,
    step_size: float,
    k: int = 1,
    seed: int = 0,
    *,
    num_blocks: int = 8,
    eval_every: int = 50,
    eval_samples: int = 4096,
) -> FitTrace:
    """Plain fixed-step gradient ascent on the ``k``-sample objective.

    Each step draws ``num_blocks * k`` fresh noise rows from the training
    stream. Every ``eval_every`` steps (and at the start and end) the trace
    records the oracle gap ``KL(q || posterior)`` together with the
    objective and ``sigma_X``, ``sigma_Y`` estimated on a fixed evaluation
    noise set, independent of the training stream.

    Raises
    ------
    DivergenceDetected
        If a step's objective estimate falls more than 1000 nats below the
        initial evaluation objective.
    """
    _check(model, q0)
    if steps < 1 or not step_size > 0:
        raise InvalidBatchSpec(f"need steps >= 1 and step_size > 0, got {steps}, {step_size}")
    log_p = exact_log_evidence(model)
    eval_eps = derive_rng(seed, "fit-eval").standard_normal((eval_samples * k, q0.dim))
    train = derive_rng(seed, "fit-train")

    def evaluate(it: int, q: ProposalParams) -> TraceRecord:
        lw = log_weights_from_noise(model, q, eval_eps)
        x = np.exp(lw - log_p)
        obj = reparam_objective(model, q, eval_eps, k)
        return TraceRecord(
            iteration=it,
            objective=obj,
            gap=exact_elbo_gap(model, q),
            sigma_x=float(np.std(x, ddof=1)),
            sigma_y=float(np.std(lw, ddof=1)),
            loc=tuple(float(v) for v in q.loc),
            log_scale=tuple(float(v) for v in q.log_scale),
        )

    q = q0
    records = [evaluate(0, q)]
    floor = records[0].objective - DIVERGENCE_NATS
    history = np.empty(steps)
    for it in range(1, steps + 1):
        eps = train.standard_normal((num_blocks * k, q.dim))
        g = gradient_from_noise(model, q, eps, k)
        history[it - 1] = g.objective
        if not math.isfinite(g.objective) or g.objective < floor:
            raise DivergenceDetected(
                f"objective {g.objective:.6g} at step {it} fell below initial - {DIVERGENCE_NATS:g}"
            )
        q = ProposalParams(q.loc + step_size * g.loc, q.log_scale + step_size * g.log_scale)
        if it % eval_every == 0 or it == steps:
            records.append(evaluate(it, q))
    return FitTrace(records=records, objective_history=history, final=q, k=k, seed=seed)
