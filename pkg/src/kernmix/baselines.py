from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import linear_sum_assignment

from kernmix.base.model import (
    Cytogram,
    CytoSeries,
    Event,
    MixtureState,
    ParamsSeries,
)
from kernmix.exception import KernmixError, ValidationError
from kernmix.initialization import ClassicalEMResult, InitConfig, classical_em
from kernmix.kernel_em import FitResult, expectation
from kernmix.log import logger


@dataclass(frozen=True)
class Assignment:
    """A perfect matching: time-t cluster `j` maps to reference `perm[j]`"""

    perm: Tuple[int, ...]
    cost: float

    @property
    def order(self) -> List[int]:
        """Relabeling order: new cluster `k` is old cluster `order[k]`"""
        return [int(j) for j in np.argsort(self.perm)]


def hungarian_solve(cost: ArrayLike) -> Assignment:
    """Minimum-cost perfect matching of a square cost matrix

    Raises:
        ValidationError: If the matrix is not square or has non-finite
            entries
    """
    matrix = np.asarray(cost, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(
            f"Cost matrix must be square, got shape {matrix.shape}"
        )
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("Cost matrix entries must be finite")
    rows, columns = linear_sum_assignment(matrix)
    return Assignment(
        perm=tuple(int(c) for c in columns),
        cost=float(matrix[rows, columns].sum()),
    )


def constant_fit(
    series: CytoSeries, K: int, config: Optional[InitConfig] = None
) -> FitResult:
    """One mixture for the whole series

    Every cytogram is collapsed into a single aggregated cytogram, fitted
    with classical EM, and the fit is replicated at every time.
    """
    config = config or InitConfig()
    result = classical_em(
        series.pooled(), K, config.seed, config.em_max_iters, config.em_tol
    )
    params = ParamsSeries.constant(series.times, result.state)
    events = list(result.events)
    resp, _ = expectation(series, params, events)
    return FitResult(
        params, resp, result.loglik_trace, tuple(events), result.converged
    )


def hungarian_fit(
    series: CytoSeries, K: int, config: Optional[InitConfig] = None
) -> FitResult:
    """Independent mixtures per time, labels chained by matching

    The EM at each time is warm-started from the previous time's matched
    state and falls back to fresh seeding if that fails. Clusters at time
    `t` are then relabeled to minimize the summed squared distance between
    their means and the means at `t - 1`. A time whose EM fails outright
    carries the previous state forward.

    Raises:
        KernmixError: If the first cytogram cannot be fitted
    """
    config = config or InitConfig()
    events: List[Event] = []
    states: List[MixtureState] = []
    converged = True
    previous: Optional[MixtureState] = None
    for cytogram in series:
        try:
            result = _per_time_em(cytogram, K, config, previous)
        except KernmixError as e:
            if previous is None:
                raise
            events.append(
                Event(
                    "em_failure",
                    f"per-time EM failed ({e}); previous state carried",
                    time=cytogram.time,
                )
            )
            states.append(previous)
            continue
        events.extend(result.events)
        converged = converged and result.converged
        state = result.state
        if previous is not None:
            cost = np.sum(
                (state.mu[:, None, :] - previous.mu[None, :, :]) ** 2, axis=2
            )
            state = state.permuted(hungarian_solve(cost).order)
        states.append(state)
        previous = state
    params = ParamsSeries.from_states(series.times, states)
    resp, loglik = expectation(series, params, events)
    logger.info(f"Per-time matched fit over {len(series)} time(s)")
    return FitResult(params, resp, (loglik,), tuple(events), converged)


def _per_time_em(
    cytogram: Cytogram,
    K: int,
    config: InitConfig,
    previous: Optional[MixtureState],
) -> ClassicalEMResult:
    if previous is not None:
        try:
            return classical_em(
                cytogram,
                K,
                config.seed,
                config.em_max_iters,
                config.em_tol,
                init=previous,
            )
        except KernmixError as e:
            logger.debug(f"Warm start failed at t={cytogram.time}: {e}")
    return classical_em(
        cytogram, K, config.seed, config.em_max_iters, config.em_tol
    )
