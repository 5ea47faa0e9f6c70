from __future__ import annotations

from dataclasses import replace
from typing import Optional

from kernmix.base.kernel import DEFAULT_CUTOFF, Bandwidths
from kernmix.base.method import FitMethod
from kernmix.base.model import CytoSeries
from kernmix.baselines import constant_fit, hungarian_fit
from kernmix.decorator import register
from kernmix.initialization import InitConfig, initialize
from kernmix.kernel_em import FitConfig, FitResult, fit

DEFAULT_BANDWIDTHS = Bandwidths(h_pi=5.0, h_mu=5.0, h_sigma=5.0)


@register
class KernelEMMethod(FitMethod):
    name = "kernel-em"

    def __init__(
        self,
        bandwidths: Bandwidths = DEFAULT_BANDWIDTHS,
        family: str = "gaussian",
        cutoff: float = DEFAULT_CUTOFF,
        init: Optional[InitConfig] = None,
        max_iters: int = 100,
        tol: float = 1e-6,
    ) -> None:
        self.bandwidths = bandwidths
        self.family = family
        self.cutoff = cutoff
        self.init = init or InitConfig()
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, series: CytoSeries, K: int, seed: int) -> FitResult:
        start = initialize(series, K, replace(self.init, seed=seed))
        config = FitConfig(
            K=K,
            bandwidths=self.bandwidths,
            family=self.family,
            cutoff=self.cutoff,
            max_iters=self.max_iters,
            tol=self.tol,
            seed=seed,
        )
        return fit(series, start, config)


@register
class ConstantMethod(FitMethod):
    name = "constant"

    def __init__(self, init: Optional[InitConfig] = None) -> None:
        self.init = init or InitConfig()

    def fit(self, series: CytoSeries, K: int, seed: int) -> FitResult:
        return constant_fit(series, K, replace(self.init, seed=seed))


@register
class HungarianMethod(FitMethod):
    name = "hungarian"

    def __init__(self, init: Optional[InitConfig] = None) -> None:
        self.init = init or InitConfig()

    def fit(self, series: CytoSeries, K: int, seed: int) -> FitResult:
        return hungarian_fit(series, K, replace(self.init, seed=seed))
