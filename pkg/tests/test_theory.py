import numpy as np
import pytest

from kernmix.base.kernel import KernelSpec
from kernmix.exception import KernelSupportError, ValidationError
from kernmix.theory import (
    TheoryScenario,
    check_bias,
    check_theorem1,
    check_variance_formula,
    draw_oracles,
    exact_epe,
    exact_expectation,
    exact_mse,
    exact_variance,
    oracle_estimate,
    run_theory_check,
)

SMALL = TheoryScenario(T=11, n=10, bandwidth=0.2, reps=40, seed=3)


def test_grid_is_symmetric():
    grid = TheoryScenario(T=5).grid

    np.testing.assert_allclose(grid, [-1.0, -0.5, 0.0, 0.5, 1.0])


def test_means_under_both_labelings():
    scenario = TheoryScenario(T=5)

    np.testing.assert_allclose(scenario.means("lin")[:, 0], scenario.grid)
    np.testing.assert_allclose(
        scenario.means("av")[:, 1], -np.abs(scenario.grid)
    )
    with pytest.raises(ValidationError, match="labeling"):
        scenario.means("sorted")


@pytest.mark.parametrize(
    "options",
    (
        {"T": 10},
        {"T": 1},
        {"n": 0},
        {"sigma": -0.1},
        {"reps": 1},
        {"family": "cauchy"},
        {"bandwidth": 0.0},
    ),
)
def test_scenario_rejects(options):
    with pytest.raises(ValidationError):
        TheoryScenario(**options)


def test_interior_times():
    scenario = TheoryScenario(T=21, family="boxcar", bandwidth=0.25)

    interior = scenario.grid[scenario.interior()]

    assert interior.min() == pytest.approx(-0.7)
    assert interior.max() == pytest.approx(0.7)


def test_noiseless_estimates_equal_expectation():
    scenario = TheoryScenario(T=21, n=5, sigma=0.0, reps=4)

    draws = draw_oracles(scenario)

    for labeling in ("lin", "av"):
        expected = exact_expectation(scenario, labeling)
        for estimate in draws.estimates[labeling]:
            np.testing.assert_allclose(estimate, expected, atol=1e-12)


def test_noiseless_av_error_at_crossing():
    scenario = TheoryScenario(T=21, n=5, sigma=0.0, reps=4)
    middle = scenario.T // 2
    shrink = scenario.lambdas()[middle] @ np.abs(scenario.grid)

    report = check_theorem1(scenario)

    assert report.mse["av"][middle] == pytest.approx(
        2 * shrink**2, abs=1e-12
    )
    assert report.mse["lin"][middle] == pytest.approx(0.0, abs=1e-12)
    assert report.strict_gap


def test_boxcar_variance_counts_window():
    scenario = TheoryScenario(
        T=21, n=8, sigma=0.5, family="boxcar", bandwidth=0.25
    )

    variance = exact_variance(scenario)

    assert variance[10] == pytest.approx(0.25 / (8 * 5))
    assert variance[0] == pytest.approx(0.25 / (8 * 3))


def test_oracle_estimate_matches_loop(rng):
    times = np.arange(6.0)
    points = rng.normal(size=(6, 9))
    labels = rng.integers(0, 2, size=(6, 9))
    labels[:, 0], labels[:, 1] = 0, 1
    kernel = KernelSpec("gaussian", 1.5)

    estimate = oracle_estimate(times, points, labels, kernel, [0.5, 4.0])

    for q, t in enumerate([0.5, 4.0]):
        for k in range(2):
            top = bottom = 0.0
            for s in range(6):
                w = float(kernel.weights(t - times[s]))
                chosen = labels[s] == k
                top += w * points[s, chosen].sum()
                bottom += w * chosen.sum()
            assert estimate[q, k] == pytest.approx(top / bottom)


def test_oracle_estimate_rejects():
    kernel = KernelSpec("boxcar", 1.0)
    times = np.arange(4.0)
    points = np.zeros((4, 3))

    with pytest.raises(ValidationError, match="line up"):
        oracle_estimate(times, points, np.zeros((4, 2), int), kernel)

    labels = np.zeros((4, 3), int)
    labels[3] = 1
    with pytest.raises(KernelSupportError, match="Cluster 1"):
        oracle_estimate(times, points, labels, kernel)


def test_draws_do_not_depend_on_workers():
    scenario = TheoryScenario(T=7, n=3, reps=520, seed=11)

    one = draw_oracles(scenario, workers=1)
    three = draw_oracles(scenario, workers=3)

    assert one.estimates["av"].shape == (520, 7, 2)
    np.testing.assert_array_equal(one.estimates["lin"], three.estimates["lin"])
    np.testing.assert_array_equal(one.test_points, three.test_points)


def test_variance_matches_closed_form():
    scenario = TheoryScenario(T=11, n=10, reps=2000, seed=5)

    report = check_variance_formula(scenario)

    for value in report.variance.values():
        np.testing.assert_allclose(value, report.formula, rtol=0.2)


def test_linear_oracle_is_unbiased_inside():
    scenario = TheoryScenario(T=11, n=10, bandwidth=0.13, reps=2000, seed=8)

    report = check_bias(scenario)

    inside = report.interior
    for key in ("lin0", "lin1"):
        np.testing.assert_allclose(report.exact[key][inside], 0.0, atol=1e-12)
        assert np.all(
            np.abs(report.bias[key][inside]) < 5 * report.se[key][inside]
        )
    assert report.av_directions


def test_report_layout():
    report = run_theory_check(SMALL, workers=2)

    document = report.to_dict()
    assert set(document) == {
        "scenario",
        "bias",
        "labeling_error",
        "variance",
        "verdicts",
    }
    assert document["scenario"]["reps"] == 40
    assert set(report.verdicts) == {
        "linear_unbiased",
        "av_directions",
        "labeling_error",
        "strict_gap",
        "variance_formula",
    }
    assert len(document["labeling_error"]["mse_holds"]) == 11

    frame = report.to_frame()
    assert len(frame) == 11
    assert {"t", "mse_lin", "epe_av", "bias_av0", "var_formula"} <= set(
        frame.columns
    )


def test_verdicts_are_logged(caplog):
    run_theory_check(SMALL)

    messages = [r.message for r in caplog.records]
    assert sum(m.startswith("Theory check ") for m in messages) == 5


@pytest.mark.slow
def test_default_scenario_verdicts():
    report = run_theory_check(TheoryScenario(seed=1), workers=4)

    assert report.labeling.holds
    assert report.labeling.strict_gap
    assert report.bias.av_directions
    assert report.variance.agrees


@pytest.mark.parametrize("labeling", ("lin", "av"))
def test_mse_is_squared_bias_plus_variance(labeling):
    scenario = TheoryScenario(T=21, n=7, sigma=0.8, bandwidth=0.15)
    bias = exact_expectation(scenario, labeling) - scenario.means(labeling)

    np.testing.assert_allclose(
        exact_mse(scenario, labeling),
        np.sum(bias**2, axis=1) + 2 * exact_variance(scenario),
        rtol=1e-12,
    )


def test_linear_prediction_gap_inside():
    scenario = TheoryScenario(T=21, n=7, sigma=0.8, bandwidth=0.12)
    inside = scenario.interior()
    t = scenario.grid[inside]

    gap = exact_epe(scenario, "lin") - exact_mse(scenario, "lin")

    np.testing.assert_allclose(
        gap[inside], 2 * scenario.sigma**2 + 4 * t**2, atol=1e-12
    )


def test_labelings_share_variance():
    scenario = TheoryScenario(T=11, n=10, reps=4000, seed=13)

    report = check_variance_formula(scenario)

    for k in range(2):
        np.testing.assert_allclose(
            report.variance[f"lin{k}"], report.variance[f"av{k}"], rtol=0.15
        )


def test_labelings_agree_away_from_crossing():
    scenario = TheoryScenario(T=21, n=5, bandwidth=0.1, reps=50, seed=2)
    away = np.abs(scenario.grid) > scenario.kernel.reach + 1e-9

    report = check_theorem1(scenario)

    assert away.sum() == 10
    np.testing.assert_allclose(
        report.mse["lin"][away], report.mse["av"][away], rtol=1e-12
    )
    np.testing.assert_allclose(
        exact_mse(scenario, "lin")[away],
        exact_mse(scenario, "av")[away],
        rtol=1e-12,
    )
