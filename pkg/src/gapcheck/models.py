"""Tractable latent-variable models with closed-form evidence and posteriors.

Two families are provided:

* :class:`LogNormalRatioModel` samples the log-ratio ``Y ~ N(m, s^2)``
  directly, so every quantity of interest (gap, mean, median, standard
  deviation on both scales) has a closed form.
* :class:`GaussianLinearModel` is ``h ~ N(0, I)``, ``v | h ~ N(A h, sigma^2 I)``,
  paired with a diagonal Gaussian proposal :class:`ProposalParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import ndtri

from .errors import InvalidBatchSpec, NumericalFailure, ShapeError
from .rng import make_rng
from .stats import Coupling, LogWeightBatch

LOG_2PI = math.log(2.0 * math.pi)


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, ndmin=ndim)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LogNormalRatioModel:
    """Synthetic ratio ``X = exp(Y)`` with ``Y ~ Normal(m, s^2)``."""

    m: float = 0.0
    s: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.m) and math.isfinite(self.s)) or self.s < 0:
            raise ValueError(f"need finite m and s >= 0, got m={self.m}, s={self.s}")

    def exact_log_evidence(self) -> float:
        return self.m + 0.5 * self.s**2

    @property
    def gap(self) -> float:
        return 0.5 * self.s**2

    @property
    def mu_x(self) -> float:
        return math.exp(self.m + 0.5 * self.s**2)

    @property
    def nu_x(self) -> float:
        return math.exp(self.m)

    @property
    def sigma_x(self) -> float:
        return self.mu_x * math.sqrt(math.expm1(self.s**2))

    @property
    def mu_y(self) -> float:
        return self.m

    @property
    def nu_y(self) -> float:
        return self.m

    @property
    def sigma_y(self) -> float:
        return self.s

    @property
    def mad_x(self) -> float:
        """Closed-form ``E|X - mu_X|`` for the log-normal."""
        # E|X - mu| = 2 mu (2 Phi(s/2) - 1)
        return 2.0 * self.mu_x * math.erf(self.s / (2.0 * math.sqrt(2.0)))

    @property
    def mad_y(self) -> float:
        return self.s * math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ProposalParams:
    """Diagonal Gaussian proposal ``q(h) = N(loc, diag(exp(log_scale))^2)``."""

    loc: np.ndarray
    log_scale: np.ndarray

    def __post_init__(self):
        loc = _frozen(self.loc, 1, "loc")
        log_scale = _frozen(self.log_scale, 1, "log_scale")
        if loc.shape != log_scale.shape:
            raise ShapeError(f"loc {loc.shape} and log_scale {log_scale.shape} differ")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "log_scale", log_scale)

    @classmethod
    def from_moments(cls, mean, variance) -> "ProposalParams":
        """Build from a mean and per-dimension variances."""
        var = np.atleast_1d(np.asarray(variance, dtype=np.float64))
        return cls(np.atleast_1d(np.asarray(mean, dtype=np.float64)), 0.5 * np.log(var))

    @property
    def dim(self) -> int:
        return self.loc.shape[0]

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray


@dataclass(frozen=True)
class GaussianLinearModel:
    """Linear-Gaussian model with a standard normal prior on ``h``.

    Parameters
    ----------
    A : (d_v, d_h) array
        Likelihood weight matrix.
    noise_std : float
        Observation noise standard deviation, must be positive.
    v : (d_v,) array
        The observation.
    """

    A: np.ndarray
    noise_std: float
    v: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, 2, "A")
        v = _frozen(self.v, 1, "v")
        if A.shape[0] != v.shape[0]:
            raise ShapeError(f"A has {A.shape[0]} rows but v has length {v.shape[0]}")
        if not (math.isfinite(self.noise_std) and self.noise_std > 0):
            raise ValueError(f"noise_std must be > 0, got {self.noise_std}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "noise_std", float(self.noise_std))

    @property
    def d_v(self) -> int:
        return self.A.shape[0]

    @property
    def d_h(self) -> int:
        return self.A.shape[1]

    def exact_log_evidence(self) -> float:
        return exact_log_evidence(self)

    def posterior(self) -> GaussianPosterior:
        """Exact ``p(h | v)``, via the ``d_h x d_h`` precision ``I + A^T A / sigma^2``."""
        s2 = self.noise_std**2
        precision = np.eye(self.d_h) + self.A.T @ self.A / s2
        try:
            cho = linalg.cho_factor(precision, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalFailure("posterior precision is not positive definite") from exc
        mean = linalg.cho_solve(cho, self.A.T @ self.v / s2)
        cov = linalg.cho_solve(cho, np.eye(self.d_h))
        return GaussianPosterior(mean=mean, cov=0.5 * (cov + cov.T), precision=precision)

    def posterior_proposal(self) -> ProposalParams:
        """Diagonal proposal matching the posterior mean and marginal variances."""
        post = self.posterior()
        return ProposalParams.from_moments(post.mean, np.diag(post.cov))

    def log_joint(self, h: np.ndarray) -> np.ndarray:
        """``log p(v, h)`` for each row of ``h`` (shape ``(n, d_h)``)."""
        s2 = self.noise_std**2
        resid = self.v[None, :] - h @ self.A.T
        log_prior = -0.5 * (self.d_h * LOG_2PI + np.einsum("ij,ij->i", h, h))
        log_lik = -0.5 * (
            self.d_v * (LOG_2PI + math.log(s2)) + np.einsum("ij,ij->i", resid, resid) / s2
        )
        return log_prior + log_lik

    def grad_log_joint(self, h: np.ndarray) -> np.ndarray:
        """Gradient of ``log p(v, h)`` with respect to ``h``, row-wise."""
        resid = self.v[None, :] - h @ self.A.T
        return -h + resid @ self.A / self.noise_std**2


Model = Union[GaussianLinearModel, LogNormalRatioModel]


def exact_log_evidence(model: Model) -> float:
    """Closed-form ``log p(v)``.

    For the linear-Gaussian model this is ``log N(v; 0, A A^T + sigma^2 I)``
    evaluated through a Cholesky factor of the covariance.
    """
    if isinstance(model, LogNormalRatioModel):
        return model.exact_log_evidence()
    cov = model.A @ model.A.T + model.noise_std**2 * np.eye(model.d_v)
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailure("evidence covariance is not positive definite") from exc
    z = linalg.solve_triangular(chol, model.v, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (model.d_v * LOG_2PI + logdet + float(z @ z))


def _check_dims(model: GaussianLinearModel, q: ProposalParams) -> None:
    if q is None:
        raise ShapeError("a proposal is required for GaussianLinearModel")
    if q.dim != model.d_h:
        raise ShapeError(f"proposal has dimension {q.dim}, model latent has {model.d_h}")


def exact_elbo_gap(model: GaussianLinearModel, q: ProposalParams) -> float:
    """``KL(q || p(h | v))``, the gap between the log-evidence and the ELBO."""
    _check_dims(model, q)
    post = model.posterior()
    var_q = np.exp(2.0 * q.log_scale)
    diff = post.mean - q.loc
    logdet_post = -float(np.linalg.slogdet(post.precision)[1])
    kl = 0.5 * (
        float(np.sum(np.diag(post.precision) * var_q))
        + float(diff @ post.precision @ diff)
        - model.d_h
        + logdet_post
        - float(np.sum(2.0 * q.log_scale))
    )
    return max(kl, 0.0)


def standard_normal_draws(
    rng: np.random.Generator, n: int, dim: int, coupling: Coupling
) -> np.ndarray:
    """Standard normal matrix of shape ``(n, dim)`` under a coupling.

    Every row is marginally ``N(0, I)``. Antithetic rows come in adjacent
    pairs ``(e, -e)``. Stratified draws take the first coordinate from
    ``n`` equiprobable strata, jittered uniformly inside each stratum and
    assigned to rows by a random permutation.
    """
    coupling = Coupling(coupling)
    if n < 1:
        raise InvalidBatchSpec(f"n must be >= 1, got {n}")
    if coupling is Coupling.IID:
        return rng.standard_normal((n, dim))
    if coupling is Coupling.ANTITHETIC:
        if n % 2:
            raise InvalidBatchSpec(f"antithetic coupling needs an even n, got {n}")
        half = rng.standard_normal((n // 2, dim))
        out = np.empty((n, dim))
        out[0::2] = half
        out[1::2] = -half
        return out
    eps = rng.standard_normal((n, dim))
    strata = rng.permutation(n)
    u = (strata + rng.random(n)) / n
    # u == 0 has probability zero, but guard the inverse CDF anyway.
    eps[:, 0] = ndtri(np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg))
    return eps


def log_weights_from_noise(model: Model, q: Optional[ProposalParams], eps: np.ndarray) -> np.ndarray:
    """Reparameterised log-weights ``log p(v, h) - log q(h)``, ``h = loc + scale * eps``."""
    if isinstance(model, LogNormalRatioModel):
        return model.m + model.s * eps[:, 0]
    _check_dims(model, q)
    h = q.loc[None, :] + q.scale[None, :] * eps
    log_q = -0.5 * (q.dim * LOG_2PI + np.einsum("ij,ij->i", eps, eps)) - float(np.sum(q.log_scale))
    return model.log_joint(h) - log_q


def sample_log_weights(
    model: Model,
    q: Optional[ProposalParams],
    n: int,
    seed: int,
    coupling: Union[Coupling, str] = Coupling.IID,
) -> LogWeightBatch:
    """Draw ``n`` log importance weights with ``h ~ q`` under ``coupling``.

    ``q`` is ignored for :class:`LogNormalRatioModel`. The output is a
    deterministic function of ``(model, q, n, seed, coupling)``.
    """
    coupling = Coupling(coupling)
    if isinstance(model, GaussianLinearModel):
        _check_dims(model, q)
        dim = model.d_h
    else:
        dim = 1
    eps = standard_normal_draws(make_rng(seed), int(n), dim, coupling)
    return LogWeightBatch(log_weights_from_noise(model, q, eps), seed=seed, coupling=coupling)


def benchmark_1d(v: float = 0.0) -> GaussianLinearModel:
    """The one-dimensional benchmark ``A = [[1]]``, ``sigma = 1``."""
    return GaussianLinearModel(A=[[1.0]], noise_std=1.0, v=[v])


def model_from_spec(kind: str, **params) -> Model:
    """Construct a model from a config-style kind name and parameters."""
    if kind == "lognormal":
        return LogNormalRatioModel(m=float(params.get("m", 0.0)), s=float(params.get("s", 0.5)))
    if kind in ("gaussian_linear", "linear_gaussian"):
        return GaussianLinearModel(
            A=params.get("A", [[1.0]]),
            noise_std=float(params.get("noise_std", 1.0)),
            v=params.get("v", [0.0]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def proposal_from_spec(loc: Sequence[float], log_scale: Optional[Sequence[float]] = None,
                       scale: Optional[Sequence[float]] = None) -> ProposalParams:
    if scale is not None and log_scale is not None:
        raise ValueError("give proposal scale or log_scale, not both")
    if scale is not None:
        log_scale = np.log(np.asarray(scale, dtype=np.float64))
    if log_scale is None:
        log_scale = np.zeros(len(loc))
    return ProposalParams(loc, log_scale)
