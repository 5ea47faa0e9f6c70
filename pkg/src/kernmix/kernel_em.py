from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from kernmix.base.density import log_joint, regularize_covariance, weighted_sum
from kernmix.base.kernel import DEFAULT_CUTOFF, Bandwidths, KernelSpec
from kernmix.base.model import (
    CytoSeries,
    Event,
    FloatArray,
    ParamsSeries,
    Responsibilities,
)
from kernmix.exception import (
    KernelSupportError,
    KernmixError,
    ValidationError,
    VanishedCluster,
)
from kernmix.log import logger

VANISHED_FRACTION = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Controls for the kernel-smoothed EM loop

    Args:
        K (int): Number of clusters
        bandwidths (Bandwidths): Smoothing bandwidths in hours
        family (str, optional): Kernel family. Defaults to `"gaussian"`.
        cutoff (float, optional): Kernel cutoff as a multiple of the
            bandwidth. Defaults to `4.0`.
        max_iters (int, optional): Hard cap on iterations. Defaults to `100`.
        tol (float, optional): Relative log-likelihood change that counts
            as converged. Defaults to `1e-6`.
        seed (int, optional): Seed for any stochastic step. Defaults to `0`.
    """

    K: int
    bandwidths: Bandwidths
    family: str = "gaussian"
    cutoff: float = DEFAULT_CUTOFF
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValidationError(f"K must be at least 1, got {self.K}")
        if self.max_iters < 1:
            raise ValidationError(
                f"max_iters must be at least 1, got {self.max_iters}"
            )
        if not self.tol > 0:
            raise ValidationError(f"tol must be positive, got {self.tol}")
        KernelSpec(self.family, 1.0, self.cutoff)

    @property
    def kernel(self) -> KernelSpec:
        """The kernel family and cutoff. Bandwidths are applied per
        parameter."""
        return KernelSpec(self.family, 1.0, self.cutoff)


@dataclass(frozen=True)
class FitResult:
    params: ParamsSeries
    resp: Responsibilities
    loglik_trace: Tuple[float, ...]
    events: Tuple[Event, ...] = field(default_factory=tuple)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.loglik_trace) - 1, 0)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def expectation(
    series: CytoSeries,
    params: ParamsSeries,
    events: Optional[List[Event]] = None,
) -> Tuple[Responsibilities, float]:
    """E-step that also returns the weighted log-likelihood of `params`"""
    params.check_aligned(series)
    gammas = []
    loglik = 0.0
    for index, cytogram in enumerate(series):
        joint = log_joint(
            cytogram.points,
            params.pi[index],
            params.mu[index],
            params.sigma[index],
            cytogram.time,
        )
        norm = logsumexp(joint, axis=1, keepdims=True)
        lost = ~np.isfinite(norm[:, 0])
        with np.errstate(invalid="ignore"):
            gamma = np.exp(joint - norm)
        if np.any(lost):
            gamma[lost] = 1.0 / params.K
            _record(
                events,
                Event(
                    "underflow",
                    f"{int(lost.sum())} point(s) have zero density under "
                    "every cluster; assigned uniformly",
                    time=cytogram.time,
                ),
            )
        gamma /= gamma.sum(axis=1, keepdims=True)
        gammas.append(gamma)
        loglik += weighted_sum(cytogram.weights, norm[:, 0])
    return Responsibilities.from_gamma(series, gammas), loglik


def e_step(
    series: CytoSeries,
    params: ParamsSeries,
    events: Optional[List[Event]] = None,
) -> Responsibilities:
    """Responsibilities `gamma_itk` by Bayes rule, computed in log space

    Points whose density underflows under every cluster are assigned
    `1/K` to each cluster and an `underflow` event is recorded.

    Args:
        series (CytoSeries): The observed cytograms
        params (ParamsSeries): Current parameters on the series' times
        events (List[Event], optional): Collector for degeneracy events

    Returns:
        Responsibilities: Soft assignments and cluster masses
    """
    resp, _ = expectation(series, params, events)
    return resp


def m_step_pi(
    series: CytoSeries,
    resp: Responsibilities,
    kernel: KernelSpec,
    query_times: ArrayLike,
) -> FloatArray:
    """Kernel-smoothed mixing proportions at `query_times`

    Raises:
        KernelSupportError: If no data time lies within kernel reach of a
            query time
    """
    query = _as_times(query_times)
    weights = kernel.weight_matrix(query, series.times)
    totals = _supported_totals(series, weights, query, kernel)
    numerator = np.einsum("qs,sk->qk", weights, resp.cluster_mass)
    pi = np.clip(numerator / totals[:, None], 0.0, 1.0)
    return pi / pi.sum(axis=1, keepdims=True)


def m_step_mu(
    series: CytoSeries,
    resp: Responsibilities,
    kernel: KernelSpec,
    query_times: ArrayLike,
    previous: Optional[FloatArray] = None,
    events: Optional[List[Event]] = None,
) -> FloatArray:
    """Kernel-smoothed cluster means at `query_times`

    Where a cluster's smoothed mass is below `1e-8` of the smoothed total,
    the mean is held at `previous` (the last iterate at the same times).
    Without a previous iterate, the cluster's pooled mean over all data
    times is used instead.

    Raises:
        KernelSupportError: If no data time lies within kernel reach of a
            query time
        VanishedCluster: If a vanished cluster has no mass at all to fall
            back on
    """
    query = _as_times(query_times)
    weights = kernel.weight_matrix(query, series.times)
    totals = _supported_totals(series, weights, query, kernel)
    first = _first_moments(series, resp)
    mass = np.einsum("qs,sk->qk", weights, resp.cluster_mass)
    vanished = mass < VANISHED_FRACTION * totals[:, None]
    numerator = np.einsum("qs,skd->qkd", weights, first)
    mu = numerator / np.where(vanished, 1.0, mass)[:, :, None]
    if np.any(vanished):
        fallback = _pooled(first, resp.cluster_mass, previous, "mean")
        mu = _hold(mu, vanished, fallback, query, events, "mean")
    return mu


def m_step_sigma(
    series: CytoSeries,
    resp: Responsibilities,
    mu_hat: FloatArray,
    kernel: KernelSpec,
    query_times: ArrayLike,
    previous: Optional[FloatArray] = None,
    events: Optional[List[Event]] = None,
) -> FloatArray:
    """Kernel-smoothed cluster covariances at `query_times`

    Residuals are taken about `mu_hat`, the means at the data times. Every
    result is symmetrized and ridge-regularized; vanished clusters follow
    the same policy as `m_step_mu`.

    Raises:
        KernelSupportError: If no data time lies within kernel reach of a
            query time
        VanishedCluster: If a vanished cluster has no mass at all to fall
            back on
    """
    query = _as_times(query_times)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if mu_hat.shape != (len(series), resp.K, series.dim):
        raise ValidationError(
            f"Means at data times must have shape "
            f"{(len(series), resp.K, series.dim)}, got {mu_hat.shape}"
        )
    weights = kernel.weight_matrix(query, series.times)
    totals = _supported_totals(series, weights, query, kernel)
    scatter = _scatter(series, resp, mu_hat)
    mass = np.einsum("qs,sk->qk", weights, resp.cluster_mass)
    vanished = mass < VANISHED_FRACTION * totals[:, None]
    numerator = np.einsum("qs,skde->qkde", weights, scatter)
    sigma = numerator / np.where(vanished, 1.0, mass)[:, :, None, None]
    if np.any(vanished):
        fallback = _pooled(scatter, resp.cluster_mass, previous, "covariance")
        sigma = _hold(sigma, vanished, fallback, query, events, "covariance")
    for q, k in np.ndindex(*sigma.shape[:2]):
        sigma[q, k], lift = regularize_covariance(sigma[q, k])
        if lift > 0:
            _record(
                events,
                Event(
                    "ridge",
                    f"covariance lifted by {lift:.3g}",
                    time=float(query[q]),
                    cluster=int(k),
                ),
            )
    return sigma


def predict_at_times(
    series: CytoSeries,
    resp: Responsibilities,
    bandwidths: Bandwidths,
    kernel: KernelSpec,
    new_times: ArrayLike,
    previous: Optional[ParamsSeries] = None,
    events: Optional[List[Event]] = None,
) -> ParamsSeries:
    """Apply the kernel-smoothed M-step at arbitrary times

    Args:
        series (CytoSeries): The data the responsibilities belong to
        resp (Responsibilities): Responsibilities on `series`
        bandwidths (Bandwidths): Bandwidths for pi, mu and sigma
        kernel (KernelSpec): Kernel family and cutoff. Its own bandwidth
            is ignored.
        new_times (ArrayLike): Times at which to estimate parameters
        previous (ParamsSeries, optional): The previous iterate on
            `new_times`, held for clusters that vanish. Defaults to `None`.
        events (List[Event], optional): Collector for degeneracy events

    Raises:
        KernelSupportError: If a new time is out of kernel reach
        ValidationError: If `previous` does not live on `new_times`

    Returns:
        ParamsSeries: Parameters at `new_times`
    """
    query = _as_times(new_times)
    if previous is not None and not np.array_equal(previous.times, query):
        raise ValidationError(
            "The previous iterate must live on the requested times"
        )
    k_pi = kernel.with_bandwidth(bandwidths.h_pi)
    k_mu = kernel.with_bandwidth(bandwidths.h_mu)
    k_sigma = kernel.with_bandwidth(bandwidths.h_sigma)

    at_data = np.array_equal(query, series.times)
    pi = m_step_pi(series, resp, k_pi, query)
    mu_data = m_step_mu(
        series,
        resp,
        k_mu,
        series.times,
        previous=previous.mu if previous is not None and at_data else None,
        events=events,
    )
    mu = mu_data if at_data else m_step_mu(series, resp, k_mu, query)
    sigma = m_step_sigma(
        series,
        resp,
        mu_data,
        k_sigma,
        query,
        previous=previous.sigma if previous is not None else None,
        events=events,
    )
    return ParamsSeries(query, pi, mu, sigma)


def fit(
    series: CytoSeries, init: ParamsSeries, config: FitConfig
) -> FitResult:
    """Run kernel-smoothed EM from `init`

    Alternates the E-step with the smoothed M-steps (pi, then mu, then
    sigma about the new means) until the relative change of the weighted
    log-likelihood drops below `config.tol` or `config.max_iters` M-steps
    have run. The returned responsibilities come from a final E-step on
    the returned parameters.

    Args:
        series (CytoSeries): The observed cytograms
        init (ParamsSeries): Starting parameters on the series' times
        config (FitConfig): Loop controls

    Raises:
        KernmixError: If `K` exceeds the number of weighted points, or a
            smoothing step fails

    Returns:
        FitResult: Final parameters, responsibilities, trace and events
    """
    init.check_aligned(series)
    if init.K != config.K:
        raise ValidationError(
            f"Initialization has {init.K} clusters, config asks for "
            f"{config.K}"
        )
    if config.K > series.effective_points:
        raise KernmixError(
            f"Cannot fit {config.K} clusters to "
            f"{series.effective_points} weighted points"
        )
    events: List[Event] = []
    trace: List[float] = []
    params = init
    converged = False
    for iteration in range(1, config.max_iters + 1):
        resp, loglik = expectation(series, params, events)
        trace.append(loglik)
        logger.debug(f"kernel-EM iteration {iteration}: loglik={loglik}")
        if len(trace) > 1 and has_converged(trace[-2], loglik, config.tol):
            converged = True
            break
        params = predict_at_times(
            series,
            resp,
            config.bandwidths,
            config.kernel,
            series.times,
            previous=params,
            events=events,
        )
    else:
        resp, loglik = expectation(series, params, events)
        trace.append(loglik)
        converged = len(trace) > 1 and has_converged(
            trace[-2], loglik, config.tol
        )

    unique = _unique_events(events)
    for event in unique:
        logger.warning(
            f"{event.kind} event at t={event.time}: {event.message}"
        )
    logger.info(
        f"Kernel-EM stopped after {len(trace) - 1} iteration(s), "
        f"converged={converged}, loglik={trace[-1]:.6g}"
    )
    return FitResult(params, resp, tuple(trace), tuple(unique), converged)


def has_converged(previous: float, current: float, tol: float) -> bool:
    if not (np.isfinite(previous) and np.isfinite(current)):
        return False
    return abs(current - previous) <= tol * max(abs(current), 1e-300)


def _as_times(times: ArrayLike) -> FloatArray:
    query = np.asarray(times, dtype=float).reshape(-1)
    if not np.all(np.isfinite(query)):
        raise ValidationError("Query times must be finite")
    return query


def _supported_totals(
    series: CytoSeries,
    weights: FloatArray,
    query: FloatArray,
    kernel: KernelSpec,
) -> FloatArray:
    totals = np.einsum("qs,s->q", weights, series.totals)
    empty = np.flatnonzero(totals <= 0)
    if empty.size:
        raise KernelSupportError(
            f"No data within kernel reach ({kernel.reach:g} h) of "
            f"t={query[empty[0]]:g}. Use a larger cutoff or bandwidth."
        )
    return totals


def _first_moments(series: CytoSeries, resp: Responsibilities) -> FloatArray:
    return np.stack(
        [
            np.einsum("i,ik,id->kd", c.weights, g, c.points)
            for c, g in zip(series.cytograms, resp.gamma)
        ]
    )


def _scatter(
    series: CytoSeries, resp: Responsibilities, mu_hat: FloatArray
) -> FloatArray:
    scatter = []
    for index, (c, g) in enumerate(zip(series.cytograms, resp.gamma)):
        diff = c.points[:, None, :] - mu_hat[index][None, :, :]
        scatter.append(
            np.einsum("i,ik,ikd,ike->kde", c.weights, g, diff, diff)
        )
    return np.stack(scatter)


def _pooled(
    moments: FloatArray,
    mass: FloatArray,
    previous: Optional[FloatArray],
    what: str,
) -> Optional[FloatArray]:
    if previous is not None:
        return np.asarray(previous, dtype=float)
    pooled_mass = mass.sum(axis=0)
    empty = np.flatnonzero(pooled_mass <= 0)
    if empty.size:
        raise VanishedCluster(
            f"Cluster {empty[0]} has no mass at any time, so its {what} "
            "cannot be estimated"
        )
    pooled = moments.sum(axis=0)
    shape = (-1,) + (1,) * (pooled.ndim - 1)
    return (pooled / pooled_mass.reshape(shape))[None]


def _hold(
    estimate: FloatArray,
    vanished: np.ndarray,
    fallback: Optional[FloatArray],
    query: FloatArray,
    events: Optional[List[Event]],
    what: str,
) -> FloatArray:
    held = estimate.copy()
    for q, k in zip(*np.nonzero(vanished)):
        source = fallback[q if fallback.shape[0] > 1 else 0]
        held[q, k] = source[k]
        _record(
            events,
            Event(
                "vanished",
                f"cluster mass vanished; {what} held",
                time=float(query[q]),
                cluster=int(k),
            ),
        )
    return held


def _record(events: Optional[List[Event]], event: Event) -> None:
    if events is not None:
        events.append(event)


def _unique_events(events: Sequence[Event]) -> List[Event]:
    seen: Dict[Tuple, Event] = {}
    for event in events:
        seen.setdefault((event.kind, event.time, event.cluster), event)
    return list(seen.values())
