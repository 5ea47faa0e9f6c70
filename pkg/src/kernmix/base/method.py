from __future__ import annotations

from typing import TYPE_CHECKING

from kernmix.base.model import CytoSeries
from kernmix.registry import MethodRegistry

if TYPE_CHECKING:
    from kernmix.kernel_em import FitResult


class FitMethod:
    """
    Base class for clustering methods that turn a series into per-time
    mixture fits. Benchmarks and the command line look methods up by
    `name`, so subclasses should set it and implement `fit`.
    """

    name: str = "dummy"
    """`str`: Name the method is registered and reported under"""

    def register(self) -> FitMethod:
        """Make this configured instance available by its name

        Returns:
            FitMethod: The instance itself
        """
        MethodRegistry().register(self)
        return self

    def fit(self, series: CytoSeries, K: int, seed: int) -> FitResult:
        """Fit `K` clusters to the series

        Args:
            series (CytoSeries): The data
            K (int): Number of clusters
            seed (int): Seed for every stochastic step of this fit

        Returns:
            FitResult: Parameters and responsibilities on the series' times
        """
        raise NotImplementedError(
            f"{self.__class__.__name__} does not define fit"
        )

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} {self.name!r}>"
