from itertools import permutations

import numpy as np
import pytest

from kernmix.base.model import Cytogram, CytoSeries
from kernmix.baselines import (
    Assignment,
    constant_fit,
    hungarian_fit,
    hungarian_solve,
)
from kernmix.exception import ValidationError
from kernmix.initialization import InitConfig

from .app.data import constant_series
from kernmix.simulate import gen_disappearance, rand_index


def test_hungarian_identity():
    assignment = hungarian_solve([[0.0, 1.0], [1.0, 0.0]])

    assert assignment.perm == (0, 1)
    assert assignment.cost == 0.0


def test_hungarian_swap():
    assignment = hungarian_solve([[2.0, 1.0], [1.0, 2.0]])

    assert assignment.perm == (1, 0)
    assert assignment.cost == 2.0


def test_hungarian_tie_costs():
    assert hungarian_solve([[1.0, 2.0], [2.0, 1.0]]).cost == 2.0


def test_hungarian_matches_brute_force(rng):
    for _ in range(100):
        cost = rng.uniform(0, 10, (5, 5))
        best = min(
            sum(cost[j, p[j]] for j in range(5))
            for p in permutations(range(5))
        )

        assert hungarian_solve(cost).cost == pytest.approx(best)


@pytest.mark.parametrize(
    "cost", ([[1.0, 2.0]], [[0.0, np.nan], [1.0, 0.0]], [1.0, 2.0])
)
def test_hungarian_rejects(cost):
    with pytest.raises(ValidationError):
        hungarian_solve(cost)


def test_assignment_order_inverts_perm():
    assignment = Assignment(perm=(2, 0, 1), cost=0.0)

    assert assignment.order == [1, 2, 0]


def test_constant_fit_is_constant(series):
    result = constant_fit(series, 2, InitConfig(seed=3))

    for t in range(1, len(series)):
        np.testing.assert_array_equal(result.params.mu[t], result.params.mu[0])
        np.testing.assert_array_equal(result.params.pi[t], result.params.pi[0])
    assert len(result.resp) == len(series)


def test_constant_fit_misses_moving_cluster():
    truth = gen_disappearance(T=100, n_per_time=60, duration=20, seed=4)
    present = truth.pi[:, 1] > 0

    result = constant_fit(truth.series, 2, InitConfig(seed=1))

    moving = int(np.argmax(result.params.mu[0, :, 0]))
    error = result.params.mu[present, moving, 0] - truth.mean[present, 1]
    assert np.max(np.abs(error)) > truth.params["amplitude"] / 2


def test_hungarian_fit_jumps_when_cluster_vanishes():
    truth = gen_disappearance(T=100, n_per_time=60, duration=20, seed=4)

    result = hungarian_fit(truth.series, 2, InitConfig(seed=1))

    steps = np.abs(np.diff(result.params.mu[:, :, 0], axis=0)).max(axis=1)
    assert steps.max() > 5 * np.median(steps)


def test_identical_cytograms_keep_their_labels():
    series = constant_series(T=5)

    result = hungarian_fit(series, 2, InitConfig(seed=6))

    mu = result.params.mu
    cost = np.sum((mu[0][:, None, :] - mu[0][None, :, :]) ** 2, axis=2)
    assert hungarian_solve(cost).perm == (0, 1)
    for t in range(1, len(series)):
        np.testing.assert_allclose(mu[t], mu[0], atol=1e-3)


def test_hungarian_fit_keeps_labels_consistent(separated):
    series, labels = separated

    result = hungarian_fit(series, 2, InitConfig(seed=2))

    first = np.argmax(result.params.mu[0, :, 0])
    assert np.all(np.argmax(result.params.mu[:, :, 0], axis=1) == first)
    found = np.concatenate(result.resp.hard_labels())
    assert rand_index(np.concatenate(labels), found) > 0.99
    assert result.loglik_trace == (result.loglik,)


def test_hungarian_fit_tracks_drifting_means():
    rng = np.random.default_rng(8)
    cytograms = []
    for t in range(8):
        low = -3.0 + 0.2 * t + 0.1 * rng.standard_normal(30)
        high = 3.0 + 0.2 * t + 0.1 * rng.standard_normal(30)
        cytograms.append(Cytogram(float(t), np.concatenate([low, high])))

    result = hungarian_fit(CytoSeries(tuple(cytograms)), 2)

    mu = result.params.mu[:, :, 0]
    track = int(np.argmin(mu[0]))
    np.testing.assert_allclose(
        mu[:, track], -3.0 + 0.2 * np.arange(8), atol=0.1
    )


def test_hungarian_fit_carries_failed_times_forward(caplog):
    cytograms = (
        Cytogram(0.0, [-5.0, -5.1, -4.9, 5.0, 5.2, 4.8]),
        Cytogram(1.0, [1.0, 2.0], [1.0, 1.0]),
        Cytogram(2.0, [-5.0, -5.2, -4.8, 5.0, 5.1, 4.9]),
    )

    result = hungarian_fit(CytoSeries(cytograms), 2)

    np.testing.assert_array_equal(result.params.mu[1], result.params.mu[0])
    assert [e.kind for e in result.events if e.time == 1.0] == ["em_failure"]
    assert "Per-time matched fit" in caplog.text


def test_hungarian_fit_fails_on_first_time():
    series = CytoSeries((Cytogram(0.0, [1.0, 2.0]),))

    with pytest.raises(ValidationError):
        hungarian_fit(series, 2)
