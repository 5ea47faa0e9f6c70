from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from kernmix.base.model import (
    CytoSeries,
    FloatArray,
    LabeledSeries,
    Responsibilities,
)
from kernmix.exception import ValidationError
from kernmix.log import logger


def cluster_biomass(series: CytoSeries, resp: Responsibilities) -> FloatArray:
    """Estimated biomass of every cluster at every time, `T x K`

    Entry `(t, k)` is `sum_i C_it gamma_itk`, so rows sum to the total
    biomass of the cytogram.
    """
    _check_resp(series, resp)
    return np.stack(
        [c.weights @ g for c, g in zip(series.cytograms, resp.gamma)]
    )


def combine_clusters(
    table: FloatArray, groups: Mapping[str, Sequence[int]]
) -> Dict[str, FloatArray]:
    """Sum biomass columns over named groups of 0-based clusters

    Raises:
        ValidationError: If a group is empty or names a missing cluster
    """
    table = np.asarray(table, dtype=float)
    K = table.shape[1]
    combined = {}
    for name, clusters in groups.items():
        index = np.asarray(list(clusters), dtype=int)
        valid = index.size > 0 and np.all((index >= 0) & (index < K))
        if not valid:
            raise ValidationError(
                f"Group {name!r} must name clusters in 0..{K - 1}"
            )
        combined[name] = table[:, index].sum(axis=1)
    return combined


def biomass_frame(
    series: CytoSeries,
    resp: Responsibilities,
    groups: Optional[Mapping[str, Sequence[int]]] = None,
) -> pd.DataFrame:
    """Biomass table with a `time` column, one column per cluster and one
    per named group"""
    table = cluster_biomass(series, resp)
    frame = pd.DataFrame(
        table, columns=[f"cluster_{k}" for k in range(table.shape[1])]
    )
    frame.insert(0, "time", series.times)
    for name, column in combine_clusters(table, groups or {}).items():
        frame[name] = column
    return frame


@dataclass(frozen=True)
class ConfusionTable:
    """Cluster by population biomass shares

    `matrix[k, j]` is the share of population `populations[j]` assigned to
    cluster `k`. Populations without biomass have an all-zero column and
    are listed in `empty`.
    """

    populations: Tuple[str, ...]
    matrix: FloatArray
    empty: Tuple[str, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.matrix,
            index=[f"cluster_{k}" for k in range(self.matrix.shape[0])],
            columns=list(self.populations),
        )


def confusion_matrix(
    resp: Responsibilities, labeled: LabeledSeries, normalize: bool = True
) -> ConfusionTable:
    """Compare soft clusters with external per-point labels

    Args:
        resp (Responsibilities): Responsibilities on `labeled.series`
        labeled (LabeledSeries): The series with its labels
        normalize (bool, optional): Divide every population column by its
            total so columns sum to 1. Defaults to `True`.

    Returns:
        ConfusionTable: Clusters in numeric order, populations sorted
    """
    series = labeled.series
    _check_resp(series, resp)
    populations = labeled.populations
    column = {name: j for j, name in enumerate(populations)}
    matrix = np.zeros((resp.K, len(populations)))
    for cytogram, gamma, labels in zip(
        series.cytograms, resp.gamma, labeled.labels
    ):
        index = np.array([column[label] for label in labels])
        weighted = gamma * cytogram.weights[:, None]
        for j in np.unique(index):
            matrix[:, j] += weighted[index == j].sum(axis=0)
    totals = matrix.sum(axis=0)
    empty = tuple(
        name for name, total in zip(populations, totals) if total <= 0
    )
    for name in empty:
        logger.warning(f"Population {name!r} carries no biomass")
    if normalize:
        matrix = np.divide(
            matrix,
            totals,
            out=np.zeros_like(matrix),
            where=totals > 0,
        )
    return ConfusionTable(tuple(populations), matrix, empty)


def _check_resp(series: CytoSeries, resp: Responsibilities) -> None:
    if len(resp) != len(series):
        raise ValidationError(
            f"Responsibilities cover {len(resp)} times, the series has "
            f"{len(series)}"
        )
    for cytogram, gamma in zip(series.cytograms, resp.gamma):
        if gamma.shape[0] != cytogram.n:
            raise ValidationError(
                f"Time {cytogram.time} has {cytogram.n} points but "
                f"{gamma.shape[0]} responsibility rows"
            )

