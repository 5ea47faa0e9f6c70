from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from kernmix.base.density import weighted_loglik
from kernmix.base.kernel import Bandwidths
from kernmix.base.model import CytoSeries, IntArray, ParamsSeries
from kernmix.exception import (
    ConfigError,
    KernelSupportError,
    KernmixError,
    ValidationError,
)
from kernmix.kernel_em import FitConfig, fit, predict_at_times
from kernmix.log import logger

DEFAULT_FOLDS = 5
DEFAULT_GRID_SIZE = 7

GridCell = Tuple[float, float]


@dataclass(frozen=True)
class FoldSpec:
    """Interleaved folds: time index `t` belongs to fold `t % n_folds`"""

    n_folds: int
    fold_of: Tuple[int, ...]

    def __iter__(self) -> Iterator[Tuple[IntArray, IntArray]]:
        for fold in range(self.n_folds):
            yield self.training(fold), self.held_out(fold)

    @property
    def T(self) -> int:
        return len(self.fold_of)

    def held_out(self, fold: int) -> IntArray:
        return np.flatnonzero(np.asarray(self.fold_of) == fold)

    def training(self, fold: int) -> IntArray:
        return np.flatnonzero(np.asarray(self.fold_of) != fold)


def make_folds(T: int, n_folds: int = DEFAULT_FOLDS) -> FoldSpec:
    """Split `T` time indices into interleaved folds

    Fold `l` holds `{l, l + n_folds, l + 2 n_folds, ...}`. When the series
    is shorter than `n_folds`, every time becomes its own fold.

    Raises:
        ConfigError: If fewer than 2 folds are requested
        ValidationError: If `T < 2`
    """
    if n_folds < 2:
        raise ConfigError(f"Need at least 2 folds, got {n_folds}")
    if T < 2:
        raise ValidationError(
            f"Cross-validation needs at least 2 time points, got {T}"
        )
    n_folds = min(n_folds, T)
    return FoldSpec(n_folds, tuple(t % n_folds for t in range(T)))


@dataclass(frozen=True)
class BandwidthGrid:
    """Candidate `h_mu` and `h_pi` values with a fixed `h_sigma`

    Leaving `mu` or `pi` unset selects the default log-spaced grid.
    """

    h_sigma: float
    mu: Optional[Tuple[float, ...]] = None
    pi: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.h_sigma) and self.h_sigma > 0):
            raise ConfigError(
                f"h_sigma must be positive and finite, got {self.h_sigma}"
            )
        for name in ("mu", "pi"):
            values = getattr(self, name)
            if values is None:
                continue
            values = tuple(float(v) for v in values)
            if not values:
                raise ConfigError(f"The {name} grid is empty")
            object.__setattr__(self, name, values)


@dataclass(frozen=True)
class CVResult:
    """Scores of a bandwidth grid search

    `grid` holds `(h_mu, h_pi)` cells. Failed cells have a `nan` score, an
    empty fold breakdown and an entry in `failures`.
    """

    grid: Tuple[GridCell, ...]
    h_sigma: float
    scores: Tuple[float, ...]
    best: GridCell
    per_fold: Tuple[Tuple[float, ...], ...]
    failures: Dict[int, str] = field(default_factory=dict)

    @property
    def best_score(self) -> float:
        return self.scores[self.grid.index(self.best)]

    @property
    def best_bandwidths(self) -> Bandwidths:
        h_mu, h_pi = self.best
        return Bandwidths(h_pi=h_pi, h_mu=h_mu, h_sigma=self.h_sigma)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": [list(cell) for cell in self.grid],
            "h_sigma": self.h_sigma,
            "scores": [_maybe_nan(score) for score in self.scores],
            "best": list(self.best),
            "per_fold": [list(row) for row in self.per_fold],
            "failures": {str(k): v for k, v in self.failures.items()},
        }


def fold_logliks(
    series: CytoSeries,
    init: ParamsSeries,
    config: FitConfig,
    folds: FoldSpec,
) -> List[float]:
    """Held-out weighted log-likelihood of every fold, divided by the
    number of held-out times

    Raises:
        KernelSupportError: If a held-out time is out of kernel reach of
            the training times
    """
    if folds.T != len(series):
        raise ValidationError(
            f"Folds cover {folds.T} times, the series has {len(series)}"
        )
    init.check_aligned(series)
    scores = []
    for fold, (train, test) in enumerate(folds):
        training = series.subset(train)
        held = series.subset(test)
        result = fit(training, init.subset(train), config)
        try:
            predicted = predict_at_times(
                training,
                result.resp,
                config.bandwidths,
                config.kernel,
                held.times,
            )
        except KernelSupportError as e:
            raise KernelSupportError(f"Fold {fold}: {e}") from e
        scores.append(weighted_loglik(held, predicted) / len(test))
    return scores


def cv_score(
    series: CytoSeries,
    init: ParamsSeries,
    config: FitConfig,
    folds: Optional[FoldSpec] = None,
) -> float:
    """Cross-validated log-likelihood: the fold average of the held-out
    weighted log-likelihood per held-out time

    Args:
        series (CytoSeries): The full series
        init (ParamsSeries): Shared initialization on the full series; each
            fold uses its restriction to the training times
        config (FitConfig): Fit settings including the bandwidths to score
        folds (FoldSpec, optional): Defaults to 5 interleaved folds.

    Returns:
        float: The CV score, larger is better
    """
    if folds is None:
        folds = make_folds(len(series))
    return float(np.mean(fold_logliks(series, init, config, folds)))


def default_grid(
    series: CytoSeries, size: int = DEFAULT_GRID_SIZE
) -> List[float]:
    """Log-spaced bandwidths from 1 hour to the series' duration"""
    if series.duration <= 1:
        raise ConfigError(
            f"The series spans {series.duration:g} h, too short for the "
            "default grid. Pass explicit grid values."
        )
    return list(np.geomspace(1.0, series.duration, size))


def grid_search(
    series: CytoSeries,
    init: ParamsSeries,
    config: FitConfig,
    h_sigma: float,
    grid_mu: Optional[Sequence[float]] = None,
    grid_pi: Optional[Sequence[float]] = None,
    folds: Optional[FoldSpec] = None,
    workers: int = 1,
) -> CVResult:
    """Score every `(h_mu, h_pi)` cell with `h_sigma` held fixed

    Cells that raise a `KernmixError` are recorded as failures and never
    win. Ties go to the larger `h_mu`, then the larger `h_pi`.

    Args:
        series (CytoSeries): The full series
        init (ParamsSeries): Shared initialization for every cell and fold
        config (FitConfig): Fit settings; its bandwidths are replaced per
            cell
        h_sigma (float): Fixed covariance bandwidth
        grid_mu (Sequence[float], optional): Mean bandwidths. Defaults to
            7 log-spaced values from 1 hour to the duration.
        grid_pi (Sequence[float], optional): Proportion bandwidths.
            Defaults like `grid_mu`.
        folds (FoldSpec, optional): Defaults to 5 interleaved folds.
        workers (int, optional): Threads scoring cells. Defaults to `1`.

    Raises:
        ConfigError: If the grid is empty
        KernmixError: If every cell fails

    Returns:
        CVResult: Scores, fold breakdown and the best cell
    """
    grid_mu = list(grid_mu) if grid_mu is not None else default_grid(series)
    grid_pi = list(grid_pi) if grid_pi is not None else default_grid(series)
    cells = tuple((float(m), float(p)) for m in grid_mu for p in grid_pi)
    if not cells:
        raise ConfigError("The bandwidth grid is empty")
    if folds is None:
        folds = make_folds(len(series))

    def score(cell: GridCell) -> Tuple[Optional[List[float]], str]:
        h_mu, h_pi = cell
        cell_config = replace(
            config, bandwidths=Bandwidths(h_pi, h_mu, h_sigma)
        )
        try:
            return fold_logliks(series, init, cell_config, folds), ""
        except KernmixError as e:
            return None, f"{e.__class__.__name__}: {e}"

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        outcomes = list(pool.map(score, cells))

    scores: List[float] = []
    per_fold: List[Tuple[float, ...]] = []
    failures: Dict[int, str] = {}
    for index, (cell, (logliks, error)) in enumerate(zip(cells, outcomes)):
        if logliks is None:
            logger.warning(
                f"CV cell h_mu={cell[0]:g}, h_pi={cell[1]:g} failed: {error}"
            )
            failures[index] = error
            scores.append(float("nan"))
            per_fold.append(())
            continue
        scores.append(float(np.mean(logliks)))
        per_fold.append(tuple(logliks))
        logger.info(
            f"CV cell h_mu={cell[0]:g}, h_pi={cell[1]:g}: {scores[-1]:.6g}"
        )

    scored = [i for i, s in enumerate(scores) if np.isfinite(s)]
    if not scored:
        raise KernmixError(
            f"Every one of {len(cells)} grid cells failed; first error: "
            f"{failures[0]}"
        )
    winner = max(scored, key=lambda i: (scores[i], cells[i][0], cells[i][1]))
    return CVResult(
        grid=cells,
        h_sigma=float(h_sigma),
        scores=tuple(scores),
        best=cells[winner],
        per_fold=tuple(per_fold),
        failures=failures,
    )


def _maybe_nan(value: float) -> Optional[float]:
    return value if np.isfinite(value) else None
