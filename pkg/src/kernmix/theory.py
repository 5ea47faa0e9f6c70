from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from kernmix.base.kernel import DEFAULT_CUTOFF, KernelSpec
from kernmix.base.model import FloatArray
from kernmix.exception import KernelSupportError, ValidationError
from kernmix.log import logger

LABELINGS = ("lin", "av")
BLOCK_SIZE = 250
VERDICT_SES = 3.0
VARIANCE_SES = 4.0


@dataclass(frozen=True)
class TheoryScenario:
    """Two crossing clusters on a symmetric grid over [-1, 1]

    At every time `s` one group of `n` points has mean `s` and the other
    has mean `-s`. The linear labeling calls the first group cluster 0
    everywhere, so the cluster means are `t` and `-t`. The absolute-value
    labeling swaps the groups for `s < 0`, giving means `|t|` and `-|t|`.

    Args:
        T (int, optional): Grid size, odd so that 0 is on the grid.
            Defaults to `41`.
        n (int, optional): Points per cluster per time. Defaults to `20`.
        sigma (float, optional): Noise SD. Defaults to `0.5`.
        family (str, optional): Kernel family. Defaults to `"gaussian"`.
        bandwidth (float, optional): Kernel bandwidth. Defaults to `0.2`.
        cutoff (float, optional): Kernel cutoff. Defaults to `4.0`.
        reps (int, optional): Monte-Carlo repetitions. Defaults to `1000`.
        seed (int, optional): Root seed. Defaults to `0`.
    """

    T: int = 41
    n: int = 20
    sigma: float = 0.5
    family: str = "gaussian"
    bandwidth: float = 0.2
    cutoff: float = DEFAULT_CUTOFF
    reps: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T < 3 or self.T % 2 == 0:
            raise ValidationError(f"T must be odd and >= 3, got {self.T}")
        if self.n < 1:
            raise ValidationError(f"n must be at least 1, got {self.n}")
        if not self.sigma >= 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        if self.reps < 2:
            raise ValidationError(f"reps must be at least 2, got {self.reps}")
        KernelSpec(self.family, self.bandwidth, self.cutoff)

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.family, self.bandwidth, self.cutoff)

    @property
    def grid(self) -> FloatArray:
        m = (self.T - 1) // 2
        return np.arange(-m, m + 1) / m

    def means(self, labeling: str) -> FloatArray:
        """True cluster means under a labeling as a `T x 2` table"""
        grid = self.grid
        if labeling == "lin":
            return np.column_stack([grid, -grid])
        if labeling == "av":
            return np.column_stack([np.abs(grid), -np.abs(grid)])
        raise ValidationError(f"Unknown labeling {labeling!r}")

    def lambdas(self) -> FloatArray:
        """Normalized kernel weights: row `t` holds `lambda_{t, s}`"""
        weights = self.kernel.weight_matrix(self.grid, self.grid)
        return weights / weights.sum(axis=1, keepdims=True)

    def interior(self) -> np.ndarray:
        """Times whose whole kernel window lies inside [-1, 1]"""
        return np.abs(self.grid) + self.kernel.reach <= 1 + 1e-12


def oracle_estimate(
    times: ArrayLike,
    points: ArrayLike,
    labels: ArrayLike,
    kernel: KernelSpec,
    query_times: Optional[ArrayLike] = None,
    K: int = 2,
) -> FloatArray:
    """Kernel-smoothed cluster means with known hard labels

    Args:
        times (ArrayLike): The `T` data times
        points (ArrayLike): A `T x N` table of 1-d observations
        labels (ArrayLike): A `T x N` table of 0-based cluster labels
        kernel (KernelSpec): The smoothing kernel
        query_times (ArrayLike, optional): Where to estimate. Defaults to
            the data times.
        K (int, optional): Number of clusters. Defaults to `2`.

    Raises:
        KernelSupportError: If a cluster has no labeled point within
            kernel reach of a query time

    Returns:
        FloatArray: A `len(query_times) x K` table of estimates
    """
    times = np.asarray(times, dtype=float)
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    if points.shape != labels.shape or points.shape[0] != times.shape[0]:
        raise ValidationError(
            f"Points {points.shape}, labels {labels.shape} and "
            f"{times.shape[0]} times do not line up"
        )
    query = times if query_times is None else np.asarray(query_times, float)
    onehot = (labels[..., None] == np.arange(K)).astype(float)
    sums = np.einsum("sik,si->sk", onehot, points)
    counts = onehot.sum(axis=1).astype(float)
    weights = kernel.weight_matrix(query, times)
    return _smooth(sums[None], counts, weights, query)[0]


def _smooth(
    sums: FloatArray, counts: FloatArray, weights: FloatArray, query
) -> FloatArray:
    denominator = weights @ counts
    empty = np.argwhere(denominator <= 0)
    if empty.size:
        q, k = empty[0]
        raise KernelSupportError(
            f"Cluster {k} has no labeled points within kernel reach of "
            f"t={query[q]:g}"
        )
    return np.einsum("qs,rsk->rqk", weights, sums) / denominator


@dataclass(frozen=True)
class OracleDraws:
    """Monte-Carlo draws of both oracle estimators on one scenario

    `estimates[labeling]` is `reps x T x 2`; `test_points` is a fresh
    observation per repetition and time, shared by both labelings.
    """

    scenario: TheoryScenario
    estimates: Dict[str, FloatArray]
    test_points: FloatArray


def draw_oracles(scenario: TheoryScenario, workers: int = 1) -> OracleDraws:
    """Simulate both oracle estimators `scenario.reps` times

    Repetitions run in blocks with their own seeds derived from
    `(seed, block)`, so results are identical for any `workers`.
    """
    blocks = [
        (index, min(BLOCK_SIZE, scenario.reps - start))
        for index, start in enumerate(range(0, scenario.reps, BLOCK_SIZE))
    ]
    lambdas = scenario.lambdas()

    def run(block: Tuple[int, int]) -> Tuple[Dict[str, FloatArray], Any]:
        index, size = block
        rng = np.random.default_rng(
            np.random.SeedSequence([scenario.seed, index])
        )
        return _draw_block(scenario, lambdas, size, rng)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        outcomes = list(pool.map(run, blocks))
    estimates = {
        labeling: np.concatenate([o[0][labeling] for o in outcomes])
        for labeling in LABELINGS
    }
    test_points = np.concatenate([o[1] for o in outcomes])
    return OracleDraws(scenario, estimates, test_points)


def _draw_block(
    scenario: TheoryScenario,
    lambdas: FloatArray,
    size: int,
    rng: np.random.Generator,
) -> Tuple[Dict[str, FloatArray], FloatArray]:
    grid, n, sigma = scenario.grid, scenario.n, scenario.sigma
    noise = rng.standard_normal((size, scenario.T, 2, n))
    group_sums = n * np.stack([grid, -grid], axis=1) + sigma * noise.sum(-1)
    first, second = group_sums[..., 0], group_sums[..., 1]
    positive = grid >= 0
    sums = {
        "lin": np.stack([first, second], axis=-1),
        "av": np.stack(
            [
                np.where(positive, first, second),
                np.where(positive, second, first),
            ],
            axis=-1,
        ),
    }
    counts = np.full((scenario.T, 2), float(n))
    estimates = {
        labeling: _smooth(sums[labeling], counts, lambdas, grid)
        for labeling in LABELINGS
    }
    sign = np.where(rng.random((size, scenario.T)) < 0.5, 1.0, -1.0)
    test = sign * grid + sigma * rng.standard_normal((size, scenario.T))
    return estimates, test


def exact_variance(scenario: TheoryScenario) -> FloatArray:
    """Closed-form oracle variance per time, shared by both labelings:
    `sigma^2 / n * sum_s w(t - s)^2 / (sum_u w(t - u))^2`"""
    lambdas = scenario.lambdas()
    return scenario.sigma**2 / scenario.n * np.sum(lambdas**2, axis=1)


def exact_expectation(scenario: TheoryScenario, labeling: str) -> FloatArray:
    """Noise-free oracle estimate `sum_s lambda_{t, s} mu_k(s)`"""
    return scenario.lambdas() @ scenario.means(labeling)


def exact_mse(scenario: TheoryScenario, labeling: str) -> FloatArray:
    """`E sum_k (mu_hat_k(t) - mu_k(t))^2` from the kernel weights"""
    bias = exact_expectation(scenario, labeling) - scenario.means(labeling)
    return np.sum(bias**2, axis=1) + 2 * exact_variance(scenario)


def exact_epe(scenario: TheoryScenario, labeling: str) -> FloatArray:
    """`E sum_k (Y_t - mu_hat_k(t))^2` for a fresh point `Y_t`"""
    expected = exact_expectation(scenario, labeling)
    fresh = scenario.sigma**2 + scenario.grid**2
    return np.sum(
        fresh[:, None] + exact_variance(scenario)[:, None] + expected**2,
        axis=1,
    )


@dataclass(frozen=True)
class BiasReport:
    """Per-time bias of every (labeling, cluster) estimator

    Arrays are keyed `"lin0"`, `"lin1"`, `"av0"` and `"av1"`.
    """

    times: FloatArray
    interior: np.ndarray
    bias: Dict[str, FloatArray]
    se: Dict[str, FloatArray]
    exact: Dict[str, FloatArray]

    @property
    def linear_unbiased(self) -> bool:
        """Linear-labeling bias within 3 SE at every interior time"""
        return all(
            bool(
                np.all(
                    np.abs(self.bias[key][self.interior])
                    <= VERDICT_SES * self.se[key][self.interior]
                )
            )
            for key in ("lin0", "lin1")
        )

    @property
    def av_directions(self) -> bool:
        """Absolute-value cluster 0 biased up and cluster 1 down at t=0"""
        middle = len(self.times) // 2
        return bool(
            self.exact["av0"][middle] > 0 and self.exact["av1"][middle] < 0
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "times": self.times.tolist(),
            "interior": self.interior.tolist(),
            "bias": _lists(self.bias),
            "se": _lists(self.se),
            "exact": _lists(self.exact),
            "linear_unbiased": self.linear_unbiased,
            "av_directions": self.av_directions,
        }


@dataclass(frozen=True)
class LabelingErrorReport:
    """Monte-Carlo MSE and prediction error of both labelings per time

    The inequalities are asserted at interior times only. Near the ends
    of the grid the kernel window is cut off and the two labelings' edge
    biases can trade places; those times are reported in `mse_holds` and
    `epe_holds` but do not enter `holds`.
    """

    times: FloatArray
    interior: np.ndarray
    mse: Dict[str, FloatArray]
    mse_se: Dict[str, FloatArray]
    epe: Dict[str, FloatArray]
    epe_se: Dict[str, FloatArray]
    mse_diff_se: FloatArray
    epe_diff_se: FloatArray
    exact_mse: Dict[str, FloatArray]
    exact_epe: Dict[str, FloatArray]

    @property
    def mse_holds(self) -> np.ndarray:
        """`mse_lin <= mse_av + 3 SE` per time, SE of the paired gap"""
        margin = VERDICT_SES * self.mse_diff_se
        return self.mse["lin"] <= self.mse["av"] + margin

    @property
    def epe_holds(self) -> np.ndarray:
        margin = VERDICT_SES * self.epe_diff_se
        return self.epe["lin"] <= self.epe["av"] + margin

    @property
    def holds(self) -> bool:
        return bool(
            np.all(self.mse_holds[self.interior])
            and np.all(self.epe_holds[self.interior])
        )

    @property
    def strict_gap(self) -> bool:
        """At t=0 the absolute-value MSE exceeds the linear one by more
        than 3 SE"""
        middle = len(self.times) // 2
        gap = self.mse["av"][middle] - self.mse["lin"][middle]
        return bool(gap > VERDICT_SES * self.mse_diff_se[middle])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "times": self.times.tolist(),
            "interior": self.interior.tolist(),
            "mse": _lists(self.mse),
            "mse_se": _lists(self.mse_se),
            "epe": _lists(self.epe),
            "epe_se": _lists(self.epe_se),
            "mse_diff_se": self.mse_diff_se.tolist(),
            "epe_diff_se": self.epe_diff_se.tolist(),
            "exact_mse": _lists(self.exact_mse),
            "exact_epe": _lists(self.exact_epe),
            "mse_holds": self.mse_holds.tolist(),
            "epe_holds": self.epe_holds.tolist(),
            "holds": self.holds,
            "strict_gap": self.strict_gap,
        }


@dataclass(frozen=True)
class VarianceReport:
    """Monte-Carlo oracle variance against the closed form per time"""

    times: FloatArray
    formula: FloatArray
    variance: Dict[str, FloatArray]
    se: Dict[str, FloatArray]

    @property
    def agrees(self) -> bool:
        """Every estimator's variance within 4 SE of the closed form"""
        return all(
            bool(
                np.all(
                    np.abs(self.variance[key] - self.formula)
                    <= VARIANCE_SES * self.se[key]
                )
            )
            for key in self.variance
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "times": self.times.tolist(),
            "formula": self.formula.tolist(),
            "variance": _lists(self.variance),
            "se": _lists(self.se),
            "agrees": self.agrees,
        }


def check_bias(
    scenario: TheoryScenario, draws: Optional[OracleDraws] = None
) -> BiasReport:
    """Monte-Carlo bias of both oracle estimators at every time

    The linear-labeling estimator is only expected to be unbiased at
    interior times; boundary times are reported but flagged.
    """
    draws = draws or draw_oracles(scenario)
    bias, se, exact = {}, {}, {}
    for labeling in LABELINGS:
        truth = scenario.means(labeling)
        expected = exact_expectation(scenario, labeling)
        estimates = draws.estimates[labeling]
        for k in range(2):
            key = f"{labeling}{k}"
            bias[key] = estimates[:, :, k].mean(axis=0) - truth[:, k]
            se[key] = _se(estimates[:, :, k])
            exact[key] = expected[:, k] - truth[:, k]
    return BiasReport(scenario.grid, scenario.interior(), bias, se, exact)


def check_theorem1(
    scenario: TheoryScenario, draws: Optional[OracleDraws] = None
) -> LabelingErrorReport:
    """Compare mean squared error and expected prediction error of the
    linear and absolute-value oracles at every time"""
    draws = draws or draw_oracles(scenario)
    squared, predicted = {}, {}
    for labeling in LABELINGS:
        truth = scenario.means(labeling)
        estimates = draws.estimates[labeling]
        squared[labeling] = np.sum((estimates - truth[None]) ** 2, axis=2)
        predicted[labeling] = np.sum(
            (draws.test_points[:, :, None] - estimates) ** 2, axis=2
        )
    return LabelingErrorReport(
        times=scenario.grid,
        interior=scenario.interior(),
        mse={k: v.mean(axis=0) for k, v in squared.items()},
        mse_se={k: _se(v) for k, v in squared.items()},
        epe={k: v.mean(axis=0) for k, v in predicted.items()},
        epe_se={k: _se(v) for k, v in predicted.items()},
        mse_diff_se=_se(squared["lin"] - squared["av"]),
        epe_diff_se=_se(predicted["lin"] - predicted["av"]),
        exact_mse={k: exact_mse(scenario, k) for k in LABELINGS},
        exact_epe={k: exact_epe(scenario, k) for k in LABELINGS},
    )


def check_variance_formula(
    scenario: TheoryScenario, draws: Optional[OracleDraws] = None
) -> VarianceReport:
    """Monte-Carlo variance of every oracle estimator against
    `exact_variance`

    The SE of a sample variance is taken as `var * sqrt(2 / (reps - 1))`.
    """
    draws = draws or draw_oracles(scenario)
    variance, se = {}, {}
    for labeling in LABELINGS:
        for k in range(2):
            key = f"{labeling}{k}"
            value = draws.estimates[labeling][:, :, k].var(axis=0, ddof=1)
            variance[key] = value
            se[key] = value * np.sqrt(2.0 / (scenario.reps - 1))
    return VarianceReport(
        scenario.grid, exact_variance(scenario), variance, se
    )


@dataclass(frozen=True)
class TheoryReport:
    scenario: TheoryScenario
    bias: BiasReport
    labeling: LabelingErrorReport
    variance: VarianceReport

    @property
    def verdicts(self) -> Dict[str, bool]:
        return {
            "linear_unbiased": self.bias.linear_unbiased,
            "av_directions": self.bias.av_directions,
            "labeling_error": self.labeling.holds,
            "strict_gap": self.labeling.strict_gap,
            "variance_formula": self.variance.agrees,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": {
                "T": self.scenario.T,
                "n": self.scenario.n,
                "sigma": self.scenario.sigma,
                "family": self.scenario.family,
                "bandwidth": self.scenario.bandwidth,
                "cutoff": self.scenario.cutoff,
                "reps": self.scenario.reps,
                "seed": self.scenario.seed,
            },
            "bias": self.bias.to_dict(),
            "labeling_error": self.labeling.to_dict(),
            "variance": self.variance.to_dict(),
            "verdicts": self.verdicts,
        }

    def to_frame(self) -> pd.DataFrame:
        """Plot-ready per-time table"""
        columns: Dict[str, List[float]] = {"t": self.bias.times.tolist()}
        for key, values in self.bias.bias.items():
            columns[f"bias_{key}"] = values.tolist()
            columns[f"bias_se_{key}"] = self.bias.se[key].tolist()
        for labeling in LABELINGS:
            columns[f"mse_{labeling}"] = self.labeling.mse[labeling].tolist()
            columns[f"epe_{labeling}"] = self.labeling.epe[labeling].tolist()
        for key, values in self.variance.variance.items():
            columns[f"var_{key}"] = values.tolist()
        columns["var_formula"] = self.variance.formula.tolist()
        return pd.DataFrame(columns)


def run_theory_check(
    scenario: TheoryScenario, workers: int = 1
) -> TheoryReport:
    """Every oracle check on one shared set of Monte-Carlo draws"""
    draws = draw_oracles(scenario, workers)
    report = TheoryReport(
        scenario,
        check_bias(scenario, draws),
        check_theorem1(scenario, draws),
        check_variance_formula(scenario, draws),
    )
    for name, verdict in report.verdicts.items():
        log = logger.info if verdict else logger.warning
        log(f"Theory check {name}: {'holds' if verdict else 'FAILS'}")
    return report


def _se(values: FloatArray) -> FloatArray:
    return values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])


def _lists(table: Dict[str, FloatArray]) -> Dict[str, List[float]]:
    return {key: value.tolist() for key, value in table.items()}
