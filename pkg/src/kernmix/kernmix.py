from __future__ import annotations

from typing import Optional

from numpy.typing import ArrayLike

from kernmix.base.kernel import Bandwidths, KernelSpec
from kernmix.base.model import CytoSeries, ParamsSeries
from kernmix.crossval import (
    DEFAULT_FOLDS,
    BandwidthGrid,
    CVResult,
    grid_search,
    make_folds,
)
from kernmix.exception import ConfigError
from kernmix.initialization import InitConfig, initialize
from kernmix.kernel_em import FitConfig, FitResult, fit, predict_at_times
from kernmix.log import logger


class Kernmix:
    """Main entryway for fitting time-varying mixtures to a cytogram series.

    Example:

    ```python
    from kernmix import Bandwidths, Kernmix, load_series

    series = load_series("cruise.csv")
    model = Kernmix(K=8, bandwidths=Bandwidths(108, 23, 15))
    result = model.fit(series)
    ```
    """

    def __init__(
        self,
        *,
        K: int,
        bandwidths: Optional[Bandwidths] = None,
        grid: Optional[BandwidthGrid] = None,
        kernel: Optional[KernelSpec] = None,
        init: Optional[InitConfig] = None,
        max_iters: int = 100,
        tol: float = 1e-6,
        n_folds: int = DEFAULT_FOLDS,
        workers: int = 1,
        seed: int = 0,
    ):
        """Initializer for a Kernmix instance

        The `bandwidths` and the `grid` are mutually exclusive and exactly
        one of them must be passed. With fixed `bandwidths`, `fit` runs
        kernel-EM directly. With a `grid`, `fit` first selects `h_mu` and
        `h_pi` by cross-validation and then fits the whole series with the
        winning cell.

        Args:
            K (int): Number of clusters
            bandwidths (Bandwidths, optional): Fixed bandwidths. Defaults
                to `None`.
            grid (BandwidthGrid, optional): Candidates for cross-validation.
                Defaults to `None`.
            kernel (KernelSpec, optional): Kernel family and cutoff; its own
                bandwidth is ignored. Defaults to a gaussian kernel with
                cutoff 4.
            init (InitConfig, optional): How starting values are produced.
                Defaults to the constant scheme.
            max_iters (int, optional): Kernel-EM iteration cap. Defaults to
                `100`.
            tol (float, optional): Kernel-EM relative tolerance. Defaults to
                `1e-6`.
            n_folds (int, optional): Cross-validation folds. Defaults to `5`.
            workers (int, optional): Threads for the grid search. Defaults
                to `1`.
            seed (int, optional): Seed for every stochastic step. Defaults
                to `0`.

        Raises:
            ConfigError: If both or neither of `bandwidths` and `grid` are
                given
        """
        if bandwidths is not None and grid is not None:
            raise ConfigError("Conflict with fixed bandwidths and a grid")
        if bandwidths is None and grid is None:
            raise ConfigError("Pass either fixed bandwidths or a grid")
        if n_folds < 2:
            raise ConfigError(f"Need at least 2 folds, got {n_folds}")

        self.K = K
        self.grid = grid
        self.kernel = kernel or KernelSpec()
        self.init = init or InitConfig(seed=seed)
        self.max_iters = max_iters
        self.tol = tol
        self.n_folds = n_folds
        self.workers = workers
        self.seed = seed
        self.cv_result: Optional[CVResult] = None
        self._bandwidths = bandwidths

    @property
    def bandwidths(self) -> Bandwidths:
        """The fixed bandwidths, or those selected by the last grid search

        Raises:
            ConfigError: If a grid is configured but has not been searched
        """
        if self._bandwidths is None:
            raise ConfigError(
                "Bandwidths have not been selected yet. Run cross_validate "
                "or fit first."
            )
        return self._bandwidths

    def config(self, bandwidths: Bandwidths) -> FitConfig:
        return FitConfig(
            K=self.K,
            bandwidths=bandwidths,
            family=self.kernel.family,
            cutoff=self.kernel.cutoff,
            max_iters=self.max_iters,
            tol=self.tol,
            seed=self.seed,
        )

    def initialize(self, series: CytoSeries) -> ParamsSeries:
        """Starting parameters on the series' times"""
        return initialize(series, self.K, self.init)

    def cross_validate(
        self, series: CytoSeries, init: Optional[ParamsSeries] = None
    ) -> CVResult:
        """Search the configured grid and remember the winning bandwidths

        Args:
            series (CytoSeries): The data
            init (ParamsSeries, optional): Shared initialization. Defaults
                to `initialize(series)`.

        Raises:
            ConfigError: If no grid is configured

        Returns:
            CVResult: Scores of every cell
        """
        if self.grid is None:
            raise ConfigError("cross_validate needs a bandwidth grid")
        if init is None:
            init = self.initialize(series)
        h = self.grid.h_sigma
        trial = Bandwidths(h, h, h)
        result = grid_search(
            series,
            init,
            self.config(trial),
            h_sigma=self.grid.h_sigma,
            grid_mu=self.grid.mu,
            grid_pi=self.grid.pi,
            folds=make_folds(len(series), self.n_folds),
            workers=self.workers,
        )
        self.cv_result = result
        self._bandwidths = result.best_bandwidths
        h_mu, h_pi = result.best
        logger.info(f"Cross-validation chose h_mu={h_mu:g}, h_pi={h_pi:g}")
        return result

    def fit(self, series: CytoSeries) -> FitResult:
        """Fit kernel-EM to the whole series

        With a grid configured, bandwidths are selected by
        cross-validation first, using the same initialization.
        """
        init = self.initialize(series)
        if self.grid is not None:
            self.cross_validate(series, init)
        return fit(series, init, self.config(self.bandwidths))

    def predict(
        self, series: CytoSeries, result: FitResult, times: ArrayLike
    ) -> ParamsSeries:
        """Parameters at arbitrary times from a fit on `series`"""
        return predict_at_times(
            series, result.resp, self.bandwidths, self.kernel, times
        )
