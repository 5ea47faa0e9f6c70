import numpy as np
import pytest

from kernmix.base.density import (
    RIDGE_FLOOR,
    log_joint,
    mvn_logpdf,
    regularize_covariance,
    weighted_loglik,
)
from kernmix.base.model import Cytogram, CytoSeries
from kernmix.exception import DegenerateCovariance, ValidationError

LOG_2PI = np.log(2 * np.pi)


def test_standard_normal_at_mean():
    assert mvn_logpdf(0.0, 0.0, 1.0) == pytest.approx(-0.5 * LOG_2PI)


def test_three_dimensional_at_mean():
    sigma = np.diag([1.0, 2.0, 3.0])
    expected = -1.5 * LOG_2PI - 0.5 * np.log(6.0)

    assert mvn_logpdf(np.zeros(3), np.zeros(3), sigma) == pytest.approx(
        expected
    )


def test_diagonal_off_mean():
    value = mvn_logpdf([1.0, 0.0], [0.0, 0.0], np.diag([4.0, 1.0]))

    assert value == pytest.approx(-LOG_2PI - 0.5 * np.log(4.0) - 1 / 8)


def test_correlated_matches_direct_formula(rng):
    a = rng.standard_normal((3, 3))
    sigma = a @ a.T + np.eye(3)
    y, mu = rng.standard_normal(3), rng.standard_normal(3)
    diff = y - mu
    expected = -0.5 * (
        3 * LOG_2PI
        + np.log(np.linalg.det(sigma))
        + diff @ np.linalg.solve(sigma, diff)
    )

    assert mvn_logpdf(y, mu, sigma) == pytest.approx(expected)


def test_singular_covariance_raises():
    with pytest.raises(DegenerateCovariance, match="cluster 1"):
        mvn_logpdf([0.0, 0.0], [0.0, 0.0], np.zeros((2, 2)), "cluster 1")


def test_regularize_leaves_healthy_matrix():
    sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    fixed, lift = regularize_covariance(sigma)

    assert lift == 0.0
    np.testing.assert_array_equal(fixed, sigma)


def test_regularize_lifts_singular_matrix():
    fixed, lift = regularize_covariance(np.zeros((2, 2)))

    assert lift == RIDGE_FLOOR
    assert np.linalg.eigvalsh(fixed)[0] > 0


def test_regularize_lifts_negative_eigenvalue():
    sigma = np.array([[1.0, 0.0], [0.0, -0.5]])
    fixed, lift = regularize_covariance(sigma)

    assert lift > 0.5
    assert np.linalg.eigvalsh(fixed)[0] > 0
    mvn_logpdf([0.0, 0.0], [0.0, 0.0], fixed)


def test_log_joint_has_minus_infinity_for_empty_cluster():
    joint = log_joint(
        np.zeros((2, 1)),
        np.array([1.0, 0.0]),
        np.zeros((2, 1)),
        np.ones((2, 1, 1)),
    )

    assert joint.shape == (2, 2)
    assert np.all(np.isneginf(joint[:, 1]))


def test_weighted_loglik_matches_naive_sum(series, params):
    expected = 0.0
    for t, cytogram in enumerate(series):
        for y, weight in zip(cytogram.points, cytogram.weights):
            density = sum(
                params.pi[t, k]
                * np.exp(mvn_logpdf(y, params.mu[t, k], params.sigma[t, k]))
                for k in range(params.K)
            )
            expected += weight * np.log(density)

    assert weighted_loglik(series, params) == pytest.approx(expected)


def test_doubling_weights_doubles_loglik(series, params):
    doubled = CytoSeries(
        tuple(Cytogram(c.time, c.points, 2 * c.weights) for c in series)
    )

    assert weighted_loglik(doubled, params) == pytest.approx(
        2 * weighted_loglik(series, params)
    )


def test_zero_weight_points_are_ignored(series, params):
    first = series[0]
    padded = Cytogram(
        first.time,
        np.concatenate([first.points, [[1e6]]]),
        np.concatenate([first.weights, [0.0]]),
    )
    changed = CytoSeries((padded,) + series.cytograms[1:])

    assert weighted_loglik(changed, params) == pytest.approx(
        weighted_loglik(series, params)
    )


def test_weighted_loglik_checks_alignment(series, params):
    with pytest.raises(ValidationError):
        weighted_loglik(series.subset(range(3)), params)
