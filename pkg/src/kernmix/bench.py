from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from kernmix.base.method import FitMethod
from kernmix.exception import ConfigError, KernmixError, ValidationError
from kernmix.log import logger
from kernmix.registry import MethodRegistry
from kernmix.simulate import (
    SCENARIOS,
    SimTruth,
    mean_rand_index,
    sample_labels,
)

LABEL_MODES = ("sampled", "argmax")


@dataclass(frozen=True)
class ScenarioSpec:
    """A sweep of one simulation scenario over its varied parameter

    Args:
        scenario (str): `"disappearance"` (values are durations) or
            `"intersection"` (values are overlap levels)
        values (Sequence[float]): Parameter values to sweep
        T (int, optional): Hours per series. Defaults to `100`.
        n_per_time (int, optional): Points per hour. Defaults to `100`.
        sigma (float, optional): Noise SD. Defaults to `0.5`.
        K (int, optional): Clusters fitted by every method. Defaults to `2`.
    """

    scenario: str
    values: Tuple[float, ...]
    T: int = 100
    n_per_time: int = 100
    sigma: float = 0.5
    K: int = 2

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"Unknown scenario {self.scenario!r}. Choose one of "
                f"{sorted(SCENARIOS)}"
            )
        values = tuple(self.values)
        if not values:
            raise ConfigError("A scenario sweep needs at least one value")
        object.__setattr__(self, "values", values)

    @property
    def parameter(self) -> str:
        return SCENARIOS[self.scenario][1]

    def generate(self, value: float, seed: int) -> SimTruth:
        generator, parameter = SCENARIOS[self.scenario]
        if parameter == "duration":
            value = int(value)
        return generator(
            T=self.T,
            n_per_time=self.n_per_time,
            sigma=self.sigma,
            seed=seed,
            **{parameter: value},
        )


@dataclass(frozen=True)
class BenchRecord:
    method: str
    value: float
    run: int
    rand_index: Optional[float]
    error: str = ""


@dataclass(frozen=True)
class BenchSummary:
    method: str
    value: float
    mean: float
    se: float
    runs: int
    failed: int


@dataclass(frozen=True)
class BenchResult:
    """Per-run Rand indices of every method over a scenario sweep"""

    spec: ScenarioSpec
    methods: Tuple[str, ...]
    runs: int
    records: Tuple[BenchRecord, ...] = field(default_factory=tuple)

    def summary(self) -> List[BenchSummary]:
        """Mean Rand index and its Monte-Carlo standard error per method
        and parameter value; failed runs are counted, not averaged"""
        rows = []
        for value in self.spec.values:
            for method in self.methods:
                scores = [
                    r.rand_index
                    for r in self.records
                    if r.method == method
                    and r.value == value
                    and r.rand_index is not None
                ]
                failed = sum(
                    1
                    for r in self.records
                    if r.method == method
                    and r.value == value
                    and r.rand_index is None
                )
                rows.append(
                    BenchSummary(
                        method=method,
                        value=float(value),
                        mean=float(np.mean(scores)) if scores else np.nan,
                        se=_standard_error(scores),
                        runs=len(scores),
                        failed=failed,
                    )
                )
        return rows

    def to_frame(self) -> pd.DataFrame:
        """One row per (method, parameter value, run)"""
        return pd.DataFrame(
            {
                "method": [r.method for r in self.records],
                "scenario_param": [r.value for r in self.records],
                "run": [r.run for r in self.records],
                "rand_index": [
                    np.nan if r.rand_index is None else r.rand_index
                    for r in self.records
                ],
            }
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.spec.scenario,
            "parameter": self.spec.parameter,
            "T": self.spec.T,
            "n_per_time": self.spec.n_per_time,
            "sigma": self.spec.sigma,
            "K": self.spec.K,
            "runs": self.runs,
            "summary": [
                {
                    "method": row.method,
                    "value": row.value,
                    "mean": _finite_or_none(row.mean),
                    "se": _finite_or_none(row.se),
                    "runs": row.runs,
                    "failed": row.failed,
                }
                for row in self.summary()
            ],
            "failures": [
                {
                    "method": r.method,
                    "value": r.value,
                    "run": r.run,
                    "error": r.error,
                }
                for r in self.records
                if r.rand_index is None
            ],
        }


def run_seeds(seed: int, value_index: int, run: int) -> Tuple[int, int, int]:
    """Independent (data, fit, label) seeds for one benchmark run"""
    sequence = np.random.SeedSequence([seed, value_index, run])
    data, fitting, labels = sequence.generate_state(3)
    return int(data), int(fitting), int(labels)


def run_benchmark(
    spec: ScenarioSpec,
    methods: Sequence[Union[str, FitMethod]] = (
        "kernel-em",
        "hungarian",
        "constant",
    ),
    runs: int = 100,
    seed: int = 0,
    workers: int = 1,
    label_mode: str = "sampled",
) -> BenchResult:
    """Compare fit methods on simulated series with known labels

    For every parameter value and run a series is generated, each method
    is fitted, labels are drawn from the fitted responsibilities and the
    Rand index against the true labels is averaged over time. A method
    that raises on a run is recorded as failed for that run.

    Args:
        spec (ScenarioSpec): The scenario sweep
        methods (Sequence[Union[str, FitMethod]], optional): Registered
            method names or configured instances. Defaults to all three
            built-in methods.
        runs (int, optional): Runs per parameter value. Defaults to `100`.
        seed (int, optional): Root seed. Defaults to `0`.
        workers (int, optional): Threads running simulations. Results do
            not depend on it. Defaults to `1`.
        label_mode (str, optional): `"sampled"` draws labels from the
            responsibilities, `"argmax"` takes the most likely cluster.
            Defaults to `"sampled"`.

    Raises:
        ConfigError: On an unknown method or label mode

    Returns:
        BenchResult: Every run's score
    """
    if runs < 1:
        raise ValidationError(f"runs must be at least 1, got {runs}")
    if label_mode not in LABEL_MODES:
        raise ConfigError(
            f"Unknown label mode {label_mode!r}. Choose one of "
            f"{list(LABEL_MODES)}"
        )
    registry = MethodRegistry()
    resolved = [registry.resolve(method) for method in methods]
    names = tuple(method.name for method in resolved)
    if not resolved:
        raise ConfigError("At least one method is required")

    tasks = [
        (index, value, run)
        for index, value in enumerate(spec.values)
        for run in range(runs)
    ]

    def simulate(task: Tuple[int, float, int]) -> List[BenchRecord]:
        index, value, run = task
        data_seed, fit_seed, label_seed = run_seeds(seed, index, run)
        truth = spec.generate(value, data_seed)
        records = []
        for method in resolved:
            try:
                result = method.fit(truth.series, spec.K, fit_seed)
                if label_mode == "argmax":
                    labels = result.resp.hard_labels()
                else:
                    labels = sample_labels(result.resp, label_seed)
                score: Optional[float] = mean_rand_index(truth.labels, labels)
                error = ""
            except KernmixError as e:
                score, error = None, f"{e.__class__.__name__}: {e}"
                logger.warning(
                    f"{method.name} failed on {spec.parameter}={value}, "
                    f"run {run}: {error}"
                )
            records.append(
                BenchRecord(method.name, float(value), run, score, error)
            )
        return records

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        outcomes = list(pool.map(simulate, tasks))

    result = BenchResult(
        spec=spec,
        methods=names,
        runs=runs,
        records=tuple(record for batch in outcomes for record in batch),
    )
    for row in result.summary():
        logger.info(
            f"{row.method} at {spec.parameter}={row.value:g}: "
            f"rand={row.mean:.4f} (se {row.se:.4f}, {row.failed} failed)"
        )
    return result


def _standard_error(scores: Sequence[float]) -> float:
    if len(scores) < 2:
        return float("nan")
    return float(np.std(scores, ddof=1) / np.sqrt(len(scores)))


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None
