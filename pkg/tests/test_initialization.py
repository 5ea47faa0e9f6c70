import numpy as np
import pytest

from kernmix.base.model import Cytogram, CytoSeries, MixtureState
from kernmix.exception import ConfigError, ValidationError
from kernmix.initialization import (
    BayesState,
    InitConfig,
    bayesian_init,
    classical_em,
    constant_init,
    initialize,
    standard_em,
)

from .app.data import drifting_series, separated_series


def test_bayes_posterior_by_hand():
    state = MixtureState([1.0], [0.0], [1.0])
    cytogram = Cytogram(1.0, [3.0, 3.0])

    prior = BayesState.prior(state, np.array([2.0]))
    posterior = prior.posterior(cytogram, np.ones((2, 1)))

    assert posterior.alpha[0] == 4.0
    assert posterior.mu[0, 0] == pytest.approx(1.5)
    assert posterior.nu[0] == 6.0
    assert posterior.sigma_mean()[0, 0, 0] == pytest.approx(6.5 / 4)
    assert posterior.pi_mean()[0] == 1.0


def test_bayes_posterior_keeps_prior_for_empty_cluster():
    state = MixtureState([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])
    cytogram = Cytogram(1.0, [2.0, 4.0])
    gamma = np.array([[0.0, 1.0], [0.0, 1.0]])

    posterior = BayesState.prior(state, np.array([0.0, 5.0])).posterior(
        cytogram, gamma
    )

    assert posterior.alpha[0] == 0.0
    assert posterior.mu[0, 0] == -3.0
    np.testing.assert_allclose(posterior.pi_mean(), [0.0, 1.0])


@pytest.mark.parametrize("trial", range(100))
def test_bayes_posterior_mean_matches_precision_form(trial):
    rng = np.random.default_rng(trial)
    K, d, n = 3, 2, 20
    root = rng.standard_normal((K, d, d))
    sigma = root @ root.transpose(0, 2, 1) + np.eye(d)
    state = MixtureState(
        rng.dirichlet(np.ones(K)), rng.normal(size=(K, d)), sigma
    )
    counts = rng.uniform(0.5, 50.0, K)
    cytogram = Cytogram(
        1.0, rng.normal(scale=3.0, size=(n, d)), rng.uniform(0.1, 2.0, n)
    )
    gamma = rng.dirichlet(np.ones(K), size=n)

    posterior = BayesState.prior(state, counts).posterior(cytogram, gamma)

    for k in range(K):
        precision = np.linalg.inv(state.sigma[k])
        mass = cytogram.weights @ gamma[:, k]
        first = (cytogram.weights * gamma[:, k]) @ cytogram.points
        mean = np.linalg.solve(
            (counts[k] + mass) * precision,
            counts[k] * precision @ state.mu[k] + precision @ first,
        )
        np.testing.assert_allclose(posterior.mu[k], mean, atol=1e-10)


def test_bayes_prior_rejects_negative_counts():
    state = MixtureState([1.0], [0.0], [1.0])

    with pytest.raises(ValidationError):
        BayesState.prior(state, np.array([-1.0]))


def test_classical_em_recovers_blobs():
    series, _ = separated_series(T=1, n=200)

    result = classical_em(series[0], K=2, seed=1)

    means = np.sort(result.state.mu[:, 0])
    np.testing.assert_allclose(means, [-5.0, 5.0], atol=0.1)
    trace = np.array(result.loglik_trace)
    assert np.all(np.diff(trace) >= -1e-9 * np.abs(trace[1:]))
    assert result.converged


@pytest.mark.parametrize("dataset", range(5))
def test_classical_em_never_decreases_loglik(dataset):
    rng = np.random.default_rng(dataset)
    centers = rng.uniform(-4, 4, (3, 2))
    points = centers[rng.integers(0, 3, 90)] + rng.standard_normal((90, 2))
    cytogram = Cytogram(0.0, points, rng.uniform(0.5, 2.0, 90))

    for start in range(4):
        state = MixtureState(
            np.full(3, 1 / 3),
            points[rng.choice(90, 3, replace=False)],
            np.tile(np.eye(2) * rng.uniform(0.5, 3.0), (3, 1, 1)),
        )
        trace = np.array(
            classical_em(cytogram, 3, init=state, max_iters=50).loglik_trace
        )

        assert np.all(np.diff(trace) >= -1e-9 * np.abs(trace[1:])), start


def test_classical_em_respects_weights():
    points = np.array([-5.0, -5.1, -4.9, 5.0, 5.1, 4.9])
    light = classical_em(Cytogram(0.0, points), K=2, seed=0)
    heavy = classical_em(
        Cytogram(0.0, points, [1, 1, 1, 9, 9, 9]), K=2, seed=0
    )

    np.testing.assert_allclose(light.state.pi, [0.5, 0.5], atol=1e-6)
    assert sorted(heavy.state.pi) == pytest.approx([0.1, 0.9], abs=1e-6)


def test_classical_em_is_seeded():
    cytogram = separated_series(T=1, n=80, seed=9)[0][0]

    first = standard_em(cytogram, 2, seed=4)
    second = standard_em(cytogram, 2, seed=4)

    np.testing.assert_array_equal(first.mu, second.mu)


def test_classical_em_needs_more_points_than_clusters():
    with pytest.raises(ValidationError, match="more than 2"):
        classical_em(Cytogram(0.0, [1.0, 2.0], [1.0, 1.0]), K=2)
    with pytest.raises(ValidationError):
        classical_em(Cytogram(0.0, [1.0, 2.0, 3.0], [1.0, 0.0, 1.0]), K=2)


def test_classical_em_checks_warm_start():
    warm = MixtureState([1.0], [0.0], [1.0])

    with pytest.raises(ValidationError, match="Warm start"):
        classical_em(Cytogram(0.0, [1.0, 2.0, 3.0]), K=2, init=warm)


def test_classical_em_reseeds_empty_component():
    cytogram = Cytogram(0.0, [0.0, 0.1, 0.2, 10.0])
    warm = MixtureState([0.5, 0.5], [0.1, 1e4], [0.01, 0.01])

    result = classical_em(cytogram, K=2, init=warm, max_iters=5)

    assert "reseed" in {event.kind for event in result.events}
    assert np.all(result.state.pi > 0)


def test_constant_init_is_constant(series, init_config):
    params = constant_init(series, 2, init_config)

    assert len(params) == len(series)
    for t in range(1, len(params)):
        np.testing.assert_array_equal(params.mu[t], params.mu[0])
        np.testing.assert_array_equal(params.sigma[t], params.sigma[0])


def test_constant_init_finds_both_clusters(series, init_config):
    params = constant_init(series, 2, init_config)

    means = np.sort(params.mu[0, :, 0])
    assert means[0] < -1.5
    assert means[1] > 1.5


def test_constant_init_uses_everything_when_saturated(series):
    config = InitConfig(n_times=100, n_points_per_time=100, seed=3)

    params = constant_init(series, 2, config)
    expected = standard_em(series.pooled(), 2, seed=3)

    np.testing.assert_allclose(params.mu[0], expected.mu)


def test_constant_init_is_seeded(series, init_config):
    first = constant_init(series, 2, init_config)
    second = constant_init(series, 2, init_config)

    np.testing.assert_array_equal(first.mu, second.mu)


def test_bayesian_init_single_time_is_classical_em():
    series = CytoSeries((separated_series(T=1, n=50)[0][0],))
    config = InitConfig(method="bayesian", seed=5)

    params = bayesian_init(series, 2, config)
    expected = standard_em(series[0], 2, seed=5)

    np.testing.assert_allclose(params.mu[0], expected.mu)
    np.testing.assert_allclose(params.pi[0], expected.pi)


def test_bayesian_init_tracks_drift(series):
    params = initialize(series, 2, InitConfig(method="bayesian", seed=1))

    order = np.argsort(params.mu[0, :, 0])
    low = params.mu[:, order[0], 0]
    high = params.mu[:, order[1], 0]
    assert len(params) == len(series)
    assert np.all(low < 0) and np.all(high > 0)
    assert high[-1] > high[0]


@pytest.mark.parametrize("seed", range(5))
def test_bayesian_init_proportions_sum_to_one(seed):
    series = drifting_series(T=8, n=30, seed=seed)

    params = bayesian_init(series, 3, InitConfig(method="bayesian", seed=seed))

    np.testing.assert_allclose(params.pi.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(params.pi >= 0)


def test_bayesian_init_carries_empty_cluster_forward(caplog):
    both = Cytogram(0.0, [-5.0, -5.2, -4.8, 5.0, 5.1, 4.9])
    low = [-5.0, -5.1, -4.9]
    series = CytoSeries((both, Cytogram(1.0, low), Cytogram(2.0, low)))

    params = bayesian_init(series, 2, InitConfig(method="bayesian"))

    high = int(np.argmax(params.mu[0, :, 0]))
    assert params.pi[1, high] == pytest.approx(1 / 3)
    assert params.mu[1, high, 0] == pytest.approx(params.mu[0, high, 0])
    assert params.pi[2, high] == 0.0
    assert params.mu[2, high, 0] == pytest.approx(params.mu[0, high, 0])
    assert "carry_forward" in caplog.text


def test_initialize_dispatches(series, init_config):
    np.testing.assert_array_equal(
        initialize(series, 2, init_config).mu,
        constant_init(series, 2, init_config).mu,
    )


@pytest.mark.parametrize(
    "kwargs,error",
    (
        ({"method": "kmeans"}, ConfigError),
        ({"n_times": 0}, ValidationError),
        ({"n_points_per_time": 0}, ValidationError),
        ({"em_tol": 0.0}, ValidationError),
    ),
)
def test_init_config_rejects(kwargs, error):
    with pytest.raises(error):
        InitConfig(**kwargs)
