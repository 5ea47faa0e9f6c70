import numpy as np
import pytest

from kernmix.base.model import (
    Cytogram,
    CytoSeries,
    Event,
    LabeledSeries,
    MixtureState,
    ParamsSeries,
    Responsibilities,
)
from kernmix.exception import ValidationError


def test_cytogram_defaults_to_unit_weights():
    cytogram = Cytogram(1.0, [0.5, 1.5, 2.5])

    assert cytogram.n == 3
    assert cytogram.dim == 1
    assert cytogram.total == 3.0
    assert cytogram.points.shape == (3, 1)


@pytest.mark.parametrize(
    "points,weights",
    (
        ([[1.0], [2.0]], [1.0, -1.0]),
        ([[1.0], [2.0]], [0.0, 0.0]),
        ([[1.0], [np.nan]], [1.0, 1.0]),
        ([[1.0], [2.0]], [1.0]),
        (np.empty((0, 2)), []),
    ),
)
def test_cytogram_rejects_bad_input(points, weights):
    with pytest.raises(ValidationError):
        Cytogram(0.0, points, weights)


def test_cytogram_is_read_only():
    cytogram = Cytogram(0.0, [[1.0, 2.0]], [3.0])

    with pytest.raises(ValueError):
        cytogram.points[0, 0] = 5.0


def test_series_requires_increasing_times():
    a = Cytogram(1.0, [0.0])
    b = Cytogram(1.0, [1.0])

    with pytest.raises(ValidationError, match="strictly increasing"):
        CytoSeries((a, b))


def test_series_requires_one_dimension():
    with pytest.raises(ValidationError, match="one dimension"):
        CytoSeries((Cytogram(0.0, [0.0]), Cytogram(1.0, [[0.0, 1.0]])))


def test_series_summaries(series):
    assert len(series) == 12
    assert series.duration == 11.0
    assert series.totals.shape == (12,)
    assert series.effective_points == 12 * 40
    np.testing.assert_allclose(series.totals.sum(), series.pooled().total)


def test_series_subset_and_shift(series):
    subset = series.subset([5, 1])

    assert list(subset.times) == [1.0, 5.0]
    assert list(series.shifted(10).times) == list(series.times + 10)


def test_zero_weights_do_not_count_as_points():
    cytogram = Cytogram(0.0, [0.0, 1.0, 2.0], [1.0, 0.0, 2.0])

    assert CytoSeries((cytogram,)).effective_points == 2


def test_mixture_state_shapes():
    state = MixtureState([0.3, 0.7], [0.0, 1.0], [1.0, 2.0])

    assert state.K == 2
    assert state.dim == 1
    assert state.sigma.shape == (2, 1, 1)


@pytest.mark.parametrize(
    "pi,sigma",
    (
        ([0.5, 0.6], [1.0, 1.0]),
        ([1.2, -0.2], [1.0, 1.0]),
        ([0.5, 0.5], [1.0, 0.0]),
        ([0.5, 0.5], [1.0, -1.0]),
    ),
)
def test_mixture_state_invariants(pi, sigma):
    with pytest.raises(ValidationError):
        MixtureState(pi, [0.0, 1.0], sigma)


def test_mixture_state_rejects_asymmetric_covariance():
    sigma = [[[1.0, 0.5], [0.0, 1.0]]]

    with pytest.raises(ValidationError, match="symmetric"):
        MixtureState([1.0], [[0.0, 0.0]], sigma)


def test_mixture_state_permuted():
    state = MixtureState([0.2, 0.8], [-1.0, 1.0], [1.0, 4.0])
    swapped = state.permuted([1, 0])

    assert list(swapped.pi) == [0.8, 0.2]
    assert list(swapped.mu[:, 0]) == [1.0, -1.0]
    assert list(swapped.sigma[:, 0, 0]) == [4.0, 1.0]


def test_params_constant_and_states(series):
    state = MixtureState([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    params = ParamsSeries.constant(series.times, state)

    assert len(params) == len(series)
    assert params.K == 2
    assert params.dim == 1
    assert all(np.array_equal(s.mu, state.mu) for s in params.states)
    params.check_aligned(series)


def test_params_alignment(series, params):
    with pytest.raises(ValidationError, match="timestamps"):
        params.subset(range(5)).check_aligned(series)
    with pytest.raises(ValidationError, match="timestamps"):
        params.shifted(0.5).check_aligned(series)


def test_params_report_bad_time(series, params):
    pi = np.array(params.pi)
    pi[3] = [0.6, 0.6]

    with pytest.raises(ValidationError, match="t=3.0"):
        ParamsSeries(params.times, pi, params.mu, params.sigma)


def test_responsibilities_from_gamma():
    series = CytoSeries(
        (
            Cytogram(0.0, [0.0, 1.0], [2.0, 1.0]),
            Cytogram(1.0, [0.0], [4.0]),
        )
    )
    gamma = [np.array([[1.0, 0.0], [0.25, 0.75]]), np.array([[0.5, 0.5]])]
    resp = Responsibilities.from_gamma(series, gamma)

    np.testing.assert_allclose(resp.cluster_mass, [[2.25, 0.75], [2, 2]])
    assert resp.K == 2
    assert [list(x) for x in resp.hard_labels()] == [[0, 1], [0]]

    swapped = resp.permuted([1, 0])
    np.testing.assert_allclose(swapped.cluster_mass, [[0.75, 2.25], [2, 2]])


def test_responsibilities_must_be_probabilities():
    with pytest.raises(ValidationError, match="probability rows"):
        Responsibilities((np.array([[0.6, 0.6]]),), np.array([[0.6, 0.6]]))


def test_labeled_series_checks_lengths(series):
    labels = tuple(("a",) * c.n for c in series)

    assert LabeledSeries(series, labels).populations == ["a"]
    with pytest.raises(ValidationError):
        LabeledSeries(series, labels[:-1])
    with pytest.raises(ValidationError):
        LabeledSeries(series, (("a",),) + labels[1:])


def test_event_round_trip():
    event = Event("ridge", "covariance lifted", time=2.0, cluster=1)

    assert Event.from_dict(event.to_dict()) == event
