from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.special import logsumexp

from kernmix.base.model import CytoSeries, FloatArray, ParamsSeries
from kernmix.exception import DegenerateCovariance

RIDGE_SCALE = 1e-6
RIDGE_FLOOR = 1e-8
LOG_2PI = np.log(2 * np.pi)


def ridge_size(sigma: FloatArray) -> float:
    d = sigma.shape[-1]
    return max(RIDGE_SCALE * float(np.trace(sigma)) / d, RIDGE_FLOOR)


def regularize_covariance(sigma: FloatArray) -> Tuple[FloatArray, float]:
    """Symmetrize a covariance and lift its spectrum when near singular.

    The ridge is `1e-6 * trace / d` (never below `1e-8`). It is only added
    when the smallest eigenvalue falls below it; negative eigenvalues are
    lifted all the way to the ridge.

    Args:
        sigma (FloatArray): A `d x d` matrix

    Returns:
        Tuple[FloatArray, float]: The regularized matrix and the amount
            added to the diagonal (0.0 when untouched)
    """
    symmetric = 0.5 * (sigma + sigma.T)
    ridge = ridge_size(symmetric)
    smallest = float(np.linalg.eigvalsh(symmetric)[0])
    if smallest >= ridge:
        return symmetric, 0.0
    lift = ridge - min(smallest, 0.0)
    return symmetric + lift * np.eye(symmetric.shape[0]), lift


def _cholesky(sigma: FloatArray, where: str) -> FloatArray:
    try:
        return cholesky(sigma, lower=True)
    except (LinAlgError, ValueError) as e:
        label = f" of {where}" if where else ""
        raise DegenerateCovariance(
            f"Covariance{label} is not positive definite"
        ) from e


def component_logpdf(
    points: FloatArray, mu: FloatArray, sigma: FloatArray, where: str = ""
) -> FloatArray:
    """Log normal density of every row of `points` under one component"""
    chol = _cholesky(sigma, where)
    d = points.shape[1]
    solved = solve_triangular(chol, (points - mu).T, lower=True)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * LOG_2PI + log_det + np.sum(solved**2, axis=0))


def mvn_logpdf(
    y: FloatArray, mu: FloatArray, sigma: FloatArray, where: str = ""
) -> float:
    """Log density of a multivariate normal at one point

    Args:
        y (FloatArray): A `d` vector
        mu (FloatArray): The mean, a `d` vector
        sigma (FloatArray): A symmetric positive definite `d x d` matrix
        where (str, optional): Cluster/time description used in errors

    Raises:
        DegenerateCovariance: If `sigma` has no Cholesky factor

    Returns:
        float: `log phi(y; mu, sigma)`
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    return float(component_logpdf(y[None, :], mu, sigma, where)[0])


def log_joint(
    points: FloatArray,
    pi: FloatArray,
    mu: FloatArray,
    sigma: FloatArray,
    time: float = np.nan,
) -> FloatArray:
    """`log pi_k + log phi(y_i; mu_k, sigma_k)` as an `n x K` matrix"""
    K = pi.shape[0]
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    columns = [
        component_logpdf(
            points, mu[k], sigma[k], where=f"cluster {k} at t={time}"
        )
        for k in range(K)
    ]
    return np.stack(columns, axis=1) + log_pi


def weighted_sum(weights: FloatArray, values: FloatArray) -> float:
    """`sum_i C_i * values_i`, where zero weights contribute nothing"""
    with np.errstate(invalid="ignore"):
        terms = np.where(weights > 0, weights * values, 0.0)
    return float(np.sum(terms))


def weighted_loglik(series: CytoSeries, params: ParamsSeries) -> float:
    """Biomass-weighted mixture log-likelihood of a series

    Args:
        series (CytoSeries): The observed cytograms
        params (ParamsSeries): Parameters on the same time grid

    Raises:
        ValidationError: If the parameters do not align with the series

    Returns:
        float: `sum_t sum_i C_it log sum_k pi_tk phi(Y_it; mu_tk, sigma_tk)`
    """
    params.check_aligned(series)
    total = 0.0
    for index, cytogram in enumerate(series):
        joint = log_joint(
            cytogram.points,
            params.pi[index],
            params.mu[index],
            params.sigma[index],
            cytogram.time,
        )
        total += weighted_sum(cytogram.weights, logsumexp(joint, axis=1))
    return total
