from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Set, Tuple, Type

import numpy as np
from numpy.typing import ArrayLike

from kernmix.exception import ValidationError

DEFAULT_CUTOFF = 4.0


class Kernel(ABC):
    """Base class for time kernels

    Subclasses register themselves by `family` when they are defined, and
    are looked up by that name from a `KernelSpec`.
    """

    family = "dummy"
    registered_kernels: Set[Type[Kernel]] = set()

    def __init_subclass__(cls) -> None:
        Kernel.registered_kernels.add(cls)

    @abstractmethod
    def profile(self, u: np.ndarray) -> np.ndarray:
        """Unnormalized weight at scaled distance `u = |delta| / h`.

        Must equal 1 at `u = 0` and be nonincreasing in `u`.
        """


class GaussianKernel(Kernel):
    family = "gaussian"

    def profile(self, u: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * np.square(u))


class BoxcarKernel(Kernel):
    family = "boxcar"

    def profile(self, u: np.ndarray) -> np.ndarray:
        return (u <= 1.0).astype(float)


def get_kernel(family: str) -> Kernel:
    for kernel_type in Kernel.registered_kernels:
        if kernel_type.family == family:
            return kernel_type()
    known = sorted(k.family for k in Kernel.registered_kernels)
    raise ValidationError(
        f"Unknown kernel family {family!r}. Choose one of {known}"
    )


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family with its bandwidth (hours) and cutoff

    Weights are exactly zero once `|delta| > cutoff * bandwidth`.
    """

    family: str = "gaussian"
    bandwidth: float = 1.0
    cutoff: float = DEFAULT_CUTOFF

    def __post_init__(self) -> None:
        get_kernel(self.family)
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValidationError(
                f"Kernel bandwidth must be positive and finite, got "
                f"{self.bandwidth}"
            )
        if np.isnan(self.cutoff) or self.cutoff < 1:
            raise ValidationError(
                f"Kernel cutoff must be at least 1, got {self.cutoff}"
            )
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "cutoff", float(self.cutoff))

    @property
    def reach(self) -> float:
        """Largest time distance that receives a nonzero weight"""
        if self.family == BoxcarKernel.family:
            return self.bandwidth
        return self.cutoff * self.bandwidth

    def with_bandwidth(self, bandwidth: float) -> KernelSpec:
        return replace(self, bandwidth=bandwidth)

    def weights(self, delta: ArrayLike) -> np.ndarray:
        u = np.abs(np.asarray(delta, dtype=float)) / self.bandwidth
        values = np.asarray(get_kernel(self.family).profile(u), dtype=float)
        return np.where(u > self.cutoff, 0.0, values)

    def weight_matrix(
        self, query_times: ArrayLike, data_times: ArrayLike
    ) -> np.ndarray:
        """Weights `w_h(t - s)` as a `len(query) x len(data)` matrix"""
        query = np.asarray(query_times, dtype=float).reshape(-1, 1)
        data = np.asarray(data_times, dtype=float).reshape(1, -1)
        return self.weights(query - data)


@dataclass(frozen=True)
class Bandwidths:
    """Smoothing bandwidths (hours) for proportions, means and covariances"""

    h_pi: float
    h_mu: float
    h_sigma: float

    def __post_init__(self) -> None:
        for name in ("h_pi", "h_mu", "h_sigma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(
                    f"{name} must be positive and finite, got {value}"
                )
            object.__setattr__(self, name, float(value))

    def kernels(
        self, family: str = "gaussian", cutoff: float = DEFAULT_CUTOFF
    ) -> Tuple[KernelSpec, KernelSpec, KernelSpec]:
        """Kernel specs for (pi, mu, sigma) in that order"""
        return (
            KernelSpec(family, self.h_pi, cutoff),
            KernelSpec(family, self.h_mu, cutoff),
            KernelSpec(family, self.h_sigma, cutoff),
        )


def kernel_weight(spec: KernelSpec, delta: float) -> float:
    """Evaluate `w_h(delta)` for a single time difference"""
    return float(spec.weights(delta))
