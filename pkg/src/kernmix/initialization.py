from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from kernmix.base.density import log_joint, regularize_covariance, weighted_sum
from kernmix.base.model import (
    Cytogram,
    CytoSeries,
    Event,
    FloatArray,
    MixtureState,
    ParamsSeries,
)
from kernmix.exception import ConfigError, ValidationError
from kernmix.kernel_em import has_converged
from kernmix.log import logger

INIT_METHODS = ("constant", "bayesian")
EMPTY_FRACTION = 1e-8


@dataclass(frozen=True)
class InitConfig:
    """How the starting parameters for kernel-EM are produced

    Args:
        method (str, optional): `"constant"` (subsample, pool and replicate)
            or `"bayesian"` (sequential posterior means). Defaults to
            `"constant"`.
        n_times (int, optional): Time points to subsample. Defaults to `50`.
        n_points_per_time (int, optional): Bins drawn per sampled time.
            Defaults to `50`.
        em_max_iters (int, optional): Classical EM iteration cap. Defaults
            to `100`.
        em_tol (float, optional): Classical EM relative tolerance. Defaults
            to `1e-6`.
        seed (int, optional): Seed for subsampling and seeding. Defaults to
            `0`.
    """

    method: str = "constant"
    n_times: int = 50
    n_points_per_time: int = 50
    em_max_iters: int = 100
    em_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in INIT_METHODS:
            raise ConfigError(
                f"Unknown initialization {self.method!r}. Choose one of "
                f"{list(INIT_METHODS)}"
            )
        if self.n_times < 1 or self.n_points_per_time < 1:
            raise ValidationError(
                "n_times and n_points_per_time must be at least 1"
            )
        if self.em_max_iters < 1 or not self.em_tol > 0:
            raise ValidationError(
                "em_max_iters must be at least 1 and em_tol positive"
            )


@dataclass(frozen=True)
class ClassicalEMResult:
    state: MixtureState
    loglik_trace: Tuple[float, ...]
    events: Tuple[Event, ...] = field(default_factory=tuple)
    converged: bool = False


@dataclass(frozen=True)
class BayesState:
    """Conjugate parameters for one sequential Bayesian step

    `alpha` are Dirichlet counts, `mu` the Normal means, `psi` the
    Inverse-Wishart scatter and `nu` its degrees of freedom, all per
    cluster.
    """

    alpha: FloatArray
    mu: FloatArray
    psi: FloatArray
    nu: FloatArray

    @classmethod
    def prior(cls, state: MixtureState, counts: FloatArray) -> BayesState:
        """Prior built from the previous time's estimate and its counts"""
        counts = np.asarray(counts, dtype=float)
        if counts.shape != (state.K,) or np.any(counts < 0):
            raise ValidationError(
                f"Prior counts must be {state.K} nonnegative numbers"
            )
        return cls(
            alpha=counts,
            mu=np.array(state.mu),
            psi=counts[:, None, None] * state.sigma,
            nu=counts + state.dim + 1,
        )

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def posterior(self, cytogram: Cytogram, gamma: FloatArray) -> BayesState:
        """Absorb one cytogram given its responsibilities

        Clusters that end with zero combined count keep their prior
        parameters.
        """
        counts = cytogram.weights @ gamma
        alpha = self.alpha + counts
        present = alpha > 0
        safe = np.where(present, alpha, 1.0)
        first = np.einsum(
            "i,ik,id->kd", cytogram.weights, gamma, cytogram.points
        )
        mu = np.where(
            present[:, None],
            (self.alpha[:, None] * self.mu + first) / safe[:, None],
            self.mu,
        )
        diff = cytogram.points[:, None, :] - mu[None, :, :]
        scatter = np.einsum(
            "i,ik,ikd,ike->kde", cytogram.weights, gamma, diff, diff
        )
        return BayesState(
            alpha=alpha,
            mu=mu,
            psi=self.psi + scatter,
            nu=self.nu + counts,
        )

    def sigma_mean(self) -> FloatArray:
        """Inverse-Wishart posterior mean `psi / (nu - d - 1)`"""
        return self.psi / (self.nu - self.dim - 1)[:, None, None]

    def pi_mean(self) -> FloatArray:
        """Dirichlet posterior mean of the proportions"""
        return self.alpha / self.alpha.sum()


def classical_em(
    cytogram: Cytogram,
    K: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
    init: Optional[MixtureState] = None,
) -> ClassicalEMResult:
    """Weighted Gaussian-mixture EM on a single cytogram

    Weights act as multiplicities. Without `init`, components are seeded
    k-means++ style on the weighted points and started from a hard
    assignment to the nearest seed. A component that loses all its mass is
    reseeded at the worst-explained point with the global covariance.

    Args:
        cytogram (Cytogram): The data
        K (int): Number of components
        seed (int, optional): Seed for the component seeding. Defaults to
            `0`.
        max_iters (int, optional): Iteration cap. Defaults to `100`.
        tol (float, optional): Relative log-likelihood tolerance. Defaults
            to `1e-6`.
        init (MixtureState, optional): Warm start. Defaults to `None`.

    Raises:
        ValidationError: If there are not more weighted points than `K`

    Returns:
        ClassicalEMResult: Final state, log-likelihood trace and events
    """
    effective = int(np.count_nonzero(cytogram.weights))
    if K < 1 or effective <= K:
        raise ValidationError(
            f"Classical EM at t={cytogram.time} needs more than {K} "
            f"weighted points, got {effective}"
        )
    if init is not None and (init.K != K or init.dim != cytogram.dim):
        raise ValidationError(
            f"Warm start has K={init.K}, d={init.dim}; expected K={K}, "
            f"d={cytogram.dim}"
        )
    events: List[Event] = []
    if init is None:
        rng = np.random.default_rng(seed)
        centers = _seed_centers(cytogram, K, rng)
        gamma = _hard_assignment(cytogram.points, centers)
        misfit = _distance_score(cytogram, centers)
        state = _m_step(cytogram, gamma, misfit, events)
    else:
        state = init

    trace: List[float] = []
    converged = False
    for _ in range(max_iters):
        gamma, loglik = cytogram_posterior(cytogram, state, events)
        trace.append(loglik)
        if len(trace) > 1 and has_converged(trace[-2], loglik, tol):
            converged = True
            break
        score = -logsumexp(
            log_joint(cytogram.points, state.pi, state.mu, state.sigma),
            axis=1,
        )
        state = _m_step(cytogram, gamma, score, events)
    logger.debug(
        f"Classical EM at t={cytogram.time}: {len(trace)} E-steps, "
        f"converged={converged}"
    )
    return ClassicalEMResult(state, tuple(trace), tuple(events), converged)


def standard_em(
    cytogram: Cytogram,
    K: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
    init: Optional[MixtureState] = None,
) -> MixtureState:
    """Classical weighted EM, returning only the fitted state"""
    return classical_em(cytogram, K, seed, max_iters, tol, init).state


def cytogram_posterior(
    cytogram: Cytogram,
    state: MixtureState,
    events: Optional[List[Event]] = None,
) -> Tuple[FloatArray, float]:
    """Responsibilities and weighted log-likelihood under one state"""
    joint = log_joint(
        cytogram.points, state.pi, state.mu, state.sigma, cytogram.time
    )
    norm = logsumexp(joint, axis=1, keepdims=True)
    lost = ~np.isfinite(norm[:, 0])
    with np.errstate(invalid="ignore"):
        gamma = np.exp(joint - norm)
    if np.any(lost):
        gamma[lost] = 1.0 / state.K
        if events is not None:
            events.append(
                Event(
                    "underflow",
                    f"{int(lost.sum())} point(s) assigned uniformly",
                    time=cytogram.time,
                )
            )
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma, weighted_sum(cytogram.weights, norm[:, 0])


def constant_init(
    series: CytoSeries, K: int, config: InitConfig
) -> ParamsSeries:
    """Time-constant starting values from a pooled subsample

    Draws `n_times` time points and then `n_points_per_time` bins at each
    of them, uniformly and without replacement, keeping their weights.
    The pooled draw is fitted by classical EM and the fit is replicated at
    every time. Once the sampling saturates the draw is the whole series
    in its original order.
    """
    rng = np.random.default_rng(config.seed)
    T = len(series)
    if config.n_times >= T:
        chosen = np.arange(T)
    else:
        chosen = np.sort(rng.choice(T, size=config.n_times, replace=False))
    points, weights = [], []
    for index in chosen:
        cytogram = series[int(index)]
        if config.n_points_per_time >= cytogram.n:
            rows = np.arange(cytogram.n)
        else:
            rows = np.sort(
                rng.choice(
                    cytogram.n, size=config.n_points_per_time, replace=False
                )
            )
        points.append(cytogram.points[rows])
        weights.append(cytogram.weights[rows])
    pooled = Cytogram(
        time=float(series.times[0]),
        points=np.concatenate(points),
        weights=np.concatenate(weights),
    )
    result = classical_em(
        pooled, K, config.seed, config.em_max_iters, config.em_tol
    )
    _log_events(result.events)
    logger.info(
        f"Constant initialization from {len(chosen)} time(s) and "
        f"{pooled.n} point(s)"
    )
    return ParamsSeries.constant(series.times, result.state)


def bayesian_init(
    series: CytoSeries, K: int, config: InitConfig
) -> ParamsSeries:
    """Sequential Bayesian starting values

    Classical EM fits the first cytogram. Every later time runs one E-step
    against the previous estimate and takes posterior means, using the
    previous time's weighted counts as prior strength. A cluster with zero
    combined count carries its previous parameters forward.
    """
    events: List[Event] = []
    first = classical_em(
        series[0], K, config.seed, config.em_max_iters, config.em_tol
    )
    events.extend(first.events)
    state = first.state
    gamma, _ = cytogram_posterior(series[0], state, events)
    counts = series[0].weights @ gamma
    states = [state]
    for cytogram in series.cytograms[1:]:
        gamma, _ = cytogram_posterior(cytogram, state, events)
        posterior = BayesState.prior(state, counts).posterior(cytogram, gamma)
        state = _posterior_state(posterior, state, cytogram.time, events)
        counts = cytogram.weights @ gamma
        states.append(state)
    _log_events(events)
    return ParamsSeries.from_states(series.times, states)


def initialize(series: CytoSeries, K: int, config: InitConfig) -> ParamsSeries:
    """Starting parameters for kernel-EM using `config.method`"""
    if config.method == "bayesian":
        return bayesian_init(series, K, config)
    return constant_init(series, K, config)


def _posterior_state(
    posterior: BayesState,
    previous: MixtureState,
    time: float,
    events: List[Event],
) -> MixtureState:
    sigma = np.array(previous.sigma)
    mu = np.array(previous.mu)
    for k in range(previous.K):
        if posterior.alpha[k] <= 0:
            events.append(
                Event(
                    "carry_forward",
                    "zero combined count; previous parameters kept",
                    time=time,
                    cluster=k,
                )
            )
            continue
        mu[k] = posterior.mu[k]
        sigma[k], lift = regularize_covariance(posterior.sigma_mean()[k])
        if lift > 0:
            events.append(
                Event("ridge", f"covariance lifted by {lift:.3g}", time, k)
            )
    return MixtureState(posterior.pi_mean(), mu, sigma)


def _seed_centers(
    cytogram: Cytogram, K: int, rng: np.random.Generator
) -> FloatArray:
    points, weights = cytogram.points, cytogram.weights
    first = rng.choice(cytogram.n, p=weights / weights.sum())
    centers = [points[first]]
    for _ in range(1, K):
        distance = np.min(
            np.sum((points[:, None, :] - np.array(centers)) ** 2, axis=2),
            axis=1,
        )
        mass = weights * distance
        if mass.sum() <= 0:
            mass = weights
        centers.append(points[rng.choice(cytogram.n, p=mass / mass.sum())])
    return np.array(centers)


def _distance_score(cytogram: Cytogram, centers: FloatArray) -> FloatArray:
    distance = np.sum(
        (cytogram.points[:, None, :] - centers[None, :, :]) ** 2, axis=2
    )
    return np.min(distance, axis=1)


def _hard_assignment(points: FloatArray, centers: FloatArray) -> FloatArray:
    distance = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    gamma = np.zeros_like(distance)
    gamma[np.arange(points.shape[0]), np.argmin(distance, axis=1)] = 1.0
    return gamma


def _m_step(
    cytogram: Cytogram,
    gamma: FloatArray,
    misfit: FloatArray,
    events: List[Event],
) -> MixtureState:
    points, weights = cytogram.points, cytogram.weights
    total = weights.sum()
    mass = weights @ gamma
    empty = mass <= EMPTY_FRACTION * total
    safe = np.where(empty, 1.0, mass)
    mu = np.einsum("i,ik,id->kd", weights, gamma, points) / safe[:, None]
    diff = points[:, None, :] - mu[None, :, :]
    sigma = (
        np.einsum("i,ik,ikd,ike->kde", weights, gamma, diff, diff)
        / safe[:, None, None]
    )
    if np.any(empty):
        overall = np.atleast_2d(
            np.cov(points.T, aweights=weights, bias=True)
        )
        candidates = np.where(weights > 0, misfit, -np.inf)
        for k in np.flatnonzero(empty):
            worst = int(np.argmax(candidates))
            candidates[worst] = -np.inf
            mu[k] = points[worst]
            sigma[k] = overall
            mass[k] = weights[worst]
            events.append(
                Event(
                    "reseed",
                    "empty component reseeded at the worst-explained point",
                    time=cytogram.time,
                    cluster=int(k),
                )
            )
    for k in range(gamma.shape[1]):
        sigma[k], lift = regularize_covariance(sigma[k])
        if lift > 0:
            events.append(
                Event(
                    "ridge",
                    f"covariance lifted by {lift:.3g}",
                    time=cytogram.time,
                    cluster=int(k),
                )
            )
    return MixtureState(mass / mass.sum(), mu, sigma)


def _log_events(events) -> None:
    for event in events:
        logger.warning(
            f"{event.kind} event at t={event.time}: {event.message}"
        )
