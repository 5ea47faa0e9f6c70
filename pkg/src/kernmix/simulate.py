from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from sklearn.metrics import rand_score

from kernmix.base.model import (
    Cytogram,
    CytoSeries,
    FloatArray,
    IntArray,
    LabeledSeries,
    Responsibilities,
)
from kernmix.exception import ValidationError


@dataclass(frozen=True)
class SimTruth:
    """A simulated series together with the process that generated it

    `mean` and `pi` are `T x K` tables of the true cluster means and
    proportions; `labels` holds the drawn 0-based cluster of every point.
    """

    scenario: str
    series: CytoSeries
    labels: Tuple[IntArray, ...]
    mean: FloatArray
    pi: FloatArray
    sigma: float
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.pi.shape[1]

    @property
    def separation(self) -> FloatArray:
        """Absolute distance between the first two cluster means per time"""
        return np.abs(self.mean[:, 0] - self.mean[:, 1])

    def labeled(self) -> LabeledSeries:
        """The series with the true cluster index as every point's label"""
        return LabeledSeries(
            self.series,
            tuple(tuple(str(k) for k in row) for row in self.labels),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "params": dict(self.params),
            "times": self.series.times.tolist(),
            "mean": self.mean.tolist(),
            "pi": self.pi.tolist(),
            "sigma": self.sigma,
        }


def gen_disappearance(
    T: int = 100,
    n_per_time: int = 100,
    duration: int = 20,
    sigma: float = 0.5,
    seed: int = 0,
    amplitude: float = 1.0,
    offset: float = 4.0,
) -> SimTruth:
    """Two 1-d clusters, the second of which vanishes for a while

    Cluster 0 sits at 0. Cluster 1 follows
    `offset + amplitude * sin(2 pi t / T)` and has proportion 0 during a
    centered window of `duration` hours, 1/2 otherwise. Times are hours
    `0 .. T - 1`.

    Raises:
        ValidationError: If `duration` is negative or not below `T`
    """
    _check_sizes(T, n_per_time, sigma)
    if not 0 <= duration < T:
        raise ValidationError(
            f"Disappearance duration must lie in [0, T), got {duration}"
        )
    times = np.arange(T, dtype=float)
    start = (T - duration) // 2
    absent = (times >= start) & (times < start + duration)
    pi_second = np.where(absent, 0.0, 0.5)
    pi = np.column_stack([1.0 - pi_second, pi_second])
    mean = np.column_stack(
        [
            np.zeros(T),
            offset + amplitude * np.sin(2 * np.pi * times / T),
        ]
    )
    return _draw(
        "disappearance",
        times,
        mean,
        pi,
        sigma,
        n_per_time,
        seed,
        {
            "T": T,
            "n_per_time": n_per_time,
            "duration": duration,
            "sigma": sigma,
            "seed": seed,
            "amplitude": amplitude,
            "offset": offset,
        },
    )


def intersection_separation(
    T: int, overlap_level: float, start_sep: float
) -> FloatArray:
    """Signed separation of the two intersection trajectories

    A tent bump peaking mid-series shrinks the separation by the factor
    `1 - overlap_level`, so level 1 makes the clusters meet and larger
    levels make them cross.
    """
    times = np.arange(T, dtype=float)
    middle = (T - 1) / 2
    bump = 1.0 - np.abs(times - middle) / middle if middle > 0 else np.ones(T)
    return start_sep * (1.0 - overlap_level * bump)


def gen_intersection(
    T: int = 100,
    n_per_time: int = 100,
    overlap_level: float = 0.5,
    sigma: float = 0.5,
    seed: int = 0,
    start_sep: Optional[float] = None,
    center: float = 0.0,
) -> SimTruth:
    """Two balanced 1-d clusters drawn together mid-series

    Means are `center +- sep(t) / 2` with `sep` from
    `intersection_separation`. `start_sep` defaults to `8 sigma`, so level
    0 keeps the clusters 8 sigma apart and level 0.75 brings them to
    2 sigma.

    Raises:
        ValidationError: If `overlap_level` is negative
    """
    _check_sizes(T, n_per_time, sigma)
    if not overlap_level >= 0:
        raise ValidationError(
            f"Overlap level must be nonnegative, got {overlap_level}"
        )
    start_sep = 8.0 * sigma if start_sep is None else float(start_sep)
    separation = intersection_separation(T, overlap_level, start_sep)
    mean = np.column_stack(
        [center + separation / 2, center - separation / 2]
    )
    pi = np.full((T, 2), 0.5)
    return _draw(
        "intersection",
        np.arange(T, dtype=float),
        mean,
        pi,
        sigma,
        n_per_time,
        seed,
        {
            "T": T,
            "n_per_time": n_per_time,
            "overlap_level": overlap_level,
            "sigma": sigma,
            "seed": seed,
            "start_sep": start_sep,
            "center": center,
        },
    )


SCENARIOS = {
    "disappearance": (gen_disappearance, "duration"),
    "intersection": (gen_intersection, "overlap_level"),
}


def sample_labels(resp: Responsibilities, seed: int = 0) -> List[IntArray]:
    """Draw one 0-based label per point from its responsibility row"""
    rng = np.random.default_rng(seed)
    labels = []
    for gamma in resp.gamma:
        u = rng.random(gamma.shape[0])
        drawn = np.sum(np.cumsum(gamma, axis=1) < u[:, None], axis=1)
        labels.append(np.minimum(drawn, gamma.shape[1] - 1))
    return labels


def rand_index(labels_a: ArrayLike, labels_b: ArrayLike) -> float:
    """Share of unordered point pairs on which two labelings agree

    Raises:
        ValidationError: If the labelings differ in length or have fewer
            than two points
    """
    a = np.asarray(labels_a).reshape(-1)
    b = np.asarray(labels_b).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError(
            f"Labelings have different lengths: {a.shape[0]} and "
            f"{b.shape[0]}"
        )
    if a.shape[0] < 2:
        raise ValidationError("The Rand index needs at least two points")
    return float(rand_score(a, b))


def mean_rand_index(
    truth: Sequence[ArrayLike], labels: Sequence[ArrayLike]
) -> float:
    """Rand index per time, averaged over time"""
    if len(truth) != len(labels):
        raise ValidationError(
            f"Got labels for {len(labels)} times, truth for {len(truth)}"
        )
    return float(np.mean([rand_index(t, x) for t, x in zip(truth, labels)]))


def _check_sizes(T: int, n_per_time: int, sigma: float) -> None:
    if T < 2 or n_per_time < 1:
        raise ValidationError(
            f"Need T >= 2 and n_per_time >= 1, got T={T}, "
            f"n_per_time={n_per_time}"
        )
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")


def _draw(
    scenario: str,
    times: FloatArray,
    mean: FloatArray,
    pi: FloatArray,
    sigma: float,
    n_per_time: int,
    seed: int,
    params: Dict[str, Any],
) -> SimTruth:
    rng = np.random.default_rng(seed)
    cytograms, labels = [], []
    for index, time in enumerate(times):
        drawn = np.sum(
            np.cumsum(pi[index])[None, :] < rng.random(n_per_time)[:, None],
            axis=1,
        )
        drawn = np.minimum(drawn, pi.shape[1] - 1)
        points = mean[index, drawn] + sigma * rng.standard_normal(n_per_time)
        cytograms.append(Cytogram(time, points))
        labels.append(drawn)
    return SimTruth(
        scenario=scenario,
        series=CytoSeries(tuple(cytograms)),
        labels=tuple(labels),
        mean=mean,
        pi=pi,
        sigma=sigma,
        params=params,
    )
