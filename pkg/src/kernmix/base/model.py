from __future__ import annotations

from dataclasses import dataclass
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kernmix.exception import ValidationError

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

SUM_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-10


def _frozen(array: ArrayLike, dtype=float) -> np.ndarray:
    value = np.array(array, dtype=dtype)
    value.setflags(write=False)
    return value


@dataclass(frozen=True)
class Event:
    """A recoverable numerical degeneracy met while fitting.

    Events never interrupt a computation. They are collected on the result
    object and logged, so a caller can decide whether a fit is trustworthy.
    """

    kind: str
    message: str
    time: Optional[float] = None
    cluster: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "message": self.message,
            "time": self.time,
            "cluster": self.cluster,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Event:
        return cls(
            kind=data["kind"],
            message=data["message"],
            time=data.get("time"),
            cluster=data.get("cluster"),
        )


@dataclass(frozen=True)
class Cytogram:
    """One time point's weighted point cloud.

    Args:
        time (float): Timestamp in hours
        points (ArrayLike): An `n x d` matrix of coordinates. A 1-d array is
            read as `n` points in one dimension.
        weights (ArrayLike, optional): Nonnegative multiplicity (biomass) of
            each point. Defaults to all ones, which is the unbinned case.

    Raises:
        ValidationError: If any invariant is violated
    """

    time: float
    points: FloatArray
    weights: Optional[FloatArray] = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.time):
            raise ValidationError(f"Cytogram time must be finite: {self.time}")
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise ValidationError(
                f"Cytogram at t={self.time} must hold an n x d matrix with "
                f"n >= 1, got shape {points.shape}"
            )
        if not np.all(np.isfinite(points)):
            raise ValidationError(
                f"Cytogram at t={self.time} has non-finite coordinates"
            )
        if self.weights is None:
            weights = np.ones(points.shape[0])
        else:
            weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != points.shape[0]:
            raise ValidationError(
                f"Cytogram at t={self.time} has {points.shape[0]} points "
                f"but {weights.shape[0]} weights"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValidationError(
                f"Cytogram at t={self.time} has negative or non-finite "
                "weights"
            )
        if not np.any(weights > 0):
            raise ValidationError(
                f"Cytogram at t={self.time} needs at least one positive weight"
            )
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total(self) -> float:
        """The total weight `n_t` of the cytogram"""
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class CytoSeries:
    """An ordered time series of cytograms sharing one dimension"""

    cytograms: Tuple[Cytogram, ...]

    def __post_init__(self) -> None:
        cytograms = tuple(self.cytograms)
        if not cytograms:
            raise ValidationError("A series needs at least one cytogram")
        dims = {cytogram.dim for cytogram in cytograms}
        if len(dims) > 1:
            raise ValidationError(
                f"All cytograms must share one dimension, found {sorted(dims)}"
            )
        times = np.array([cytogram.time for cytogram in cytograms])
        if np.any(np.diff(times) <= 0):
            raise ValidationError("Cytogram times must be strictly increasing")
        object.__setattr__(self, "cytograms", cytograms)

    def __len__(self) -> int:
        return len(self.cytograms)

    def __iter__(self) -> Iterator[Cytogram]:
        return iter(self.cytograms)

    def __getitem__(self, index: int) -> Cytogram:
        return self.cytograms[index]

    @property
    def dim(self) -> int:
        return self.cytograms[0].dim

    @property
    def times(self) -> FloatArray:
        return np.array([cytogram.time for cytogram in self.cytograms])

    @property
    def totals(self) -> FloatArray:
        """Total weight `n_s` at every time"""
        return np.array([cytogram.total for cytogram in self.cytograms])

    @property
    def duration(self) -> float:
        return float(self.cytograms[-1].time - self.cytograms[0].time)

    @property
    def effective_points(self) -> int:
        """Number of points carrying positive weight over the whole series"""
        return int(
            sum(np.count_nonzero(cytogram.weights) for cytogram in self)
        )

    def subset(self, indices: Sequence[int]) -> CytoSeries:
        return CytoSeries(tuple(self.cytograms[i] for i in sorted(indices)))

    def shifted(self, offset: float) -> CytoSeries:
        return CytoSeries(
            tuple(
                Cytogram(c.time + offset, c.points, c.weights) for c in self
            )
        )

    def pooled(self) -> Cytogram:
        """Every point of the series collapsed into a single cytogram"""
        return Cytogram(
            time=self.cytograms[0].time,
            points=np.concatenate([c.points for c in self]),
            weights=np.concatenate([c.weights for c in self]),
        )


@dataclass(frozen=True)
class LabeledSeries:
    """A series carrying one external label (e.g. a manual gate) per point"""

    series: CytoSeries
    labels: Tuple[Tuple[str, ...], ...]

    def __post_init__(self) -> None:
        labels = tuple(tuple(str(x) for x in row) for row in self.labels)
        if len(labels) != len(self.series):
            raise ValidationError(
                f"Expected labels for {len(self.series)} times, "
                f"got {len(labels)}"
            )
        for cytogram, row in zip(self.series, labels):
            if len(row) != cytogram.n:
                raise ValidationError(
                    f"Time {cytogram.time} has {cytogram.n} points but "
                    f"{len(row)} labels"
                )
        object.__setattr__(self, "labels", labels)

    @property
    def populations(self) -> List[str]:
        return sorted({label for row in self.labels for label in row})


@dataclass(frozen=True)
class MixtureState:
    """Mixture parameters at a single time"""

    pi: FloatArray
    mu: FloatArray
    sigma: FloatArray

    def __post_init__(self) -> None:
        pi = np.array(self.pi, dtype=float).reshape(-1)
        mu = np.array(self.mu, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim == 1:
            sigma = sigma[:, None, None]
        K, d = mu.shape
        if pi.shape != (K,) or sigma.shape != (K, d, d):
            raise ValidationError(
                f"Inconsistent mixture shapes pi={pi.shape}, mu={mu.shape}, "
                f"sigma={sigma.shape}"
            )
        _check_parameters(pi[None], sigma[None])
        object.__setattr__(self, "pi", _frozen(pi))
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "sigma", _frozen(sigma))

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def permuted(self, order: Sequence[int]) -> MixtureState:
        """Relabel clusters so that new cluster `k` is old cluster
        `order[k]`"""
        index = np.asarray(order)
        return MixtureState(
            self.pi[index], self.mu[index], self.sigma[index]
        )


@dataclass(frozen=True)
class ParamsSeries:
    """Per-time, per-cluster mixture parameters

    Stored as stacked arrays: `pi` is `T x K`, `mu` is `T x K x d` and
    `sigma` is `T x K x d x d`.
    """

    times: FloatArray
    pi: FloatArray
    mu: FloatArray
    sigma: FloatArray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float).reshape(-1)
        pi = np.array(self.pi, dtype=float)
        mu = np.array(self.mu, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        if pi.ndim != 2 or mu.ndim != 3 or sigma.ndim != 4:
            raise ValidationError(
                f"Bad parameter ranks pi={pi.shape}, mu={mu.shape}, "
                f"sigma={sigma.shape}"
            )
        T, K = pi.shape
        d = mu.shape[2]
        if (
            times.shape != (T,)
            or mu.shape != (T, K, d)
            or sigma.shape != (T, K, d, d)
        ):
            raise ValidationError(
                f"Inconsistent parameter shapes times={times.shape}, "
                f"pi={pi.shape}, mu={mu.shape}, sigma={sigma.shape}"
            )
        if not np.all(np.isfinite(mu)):
            raise ValidationError("Cluster means must be finite")
        _check_parameters(pi, sigma, times)
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "pi", _frozen(pi))
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "sigma", _frozen(sigma))

    @classmethod
    def from_states(
        cls, times: ArrayLike, states: Sequence[MixtureState]
    ) -> ParamsSeries:
        return cls(
            times=np.asarray(times, dtype=float),
            pi=np.stack([state.pi for state in states]),
            mu=np.stack([state.mu for state in states]),
            sigma=np.stack([state.sigma for state in states]),
        )

    @classmethod
    def constant(cls, times: ArrayLike, state: MixtureState) -> ParamsSeries:
        """Replicate one state at every time"""
        times = np.asarray(times, dtype=float)
        T = times.shape[0]
        return cls(
            times=times,
            pi=np.broadcast_to(state.pi, (T, *state.pi.shape)),
            mu=np.broadcast_to(state.mu, (T, *state.mu.shape)),
            sigma=np.broadcast_to(state.sigma, (T, *state.sigma.shape)),
        )

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def K(self) -> int:
        return self.pi.shape[1]

    @property
    def dim(self) -> int:
        return self.mu.shape[2]

    @property
    def states(self) -> Tuple[MixtureState, ...]:
        return tuple(self.state_at(t) for t in range(len(self)))

    def state_at(self, index: int) -> MixtureState:
        return MixtureState(self.pi[index], self.mu[index], self.sigma[index])

    def subset(self, indices: Sequence[int]) -> ParamsSeries:
        index = np.asarray(sorted(indices))
        return ParamsSeries(
            self.times[index],
            self.pi[index],
            self.mu[index],
            self.sigma[index],
        )

    def shifted(self, offset: float) -> ParamsSeries:
        return ParamsSeries(self.times + offset, self.pi, self.mu, self.sigma)

    def permuted(self, order: Sequence[int]) -> ParamsSeries:
        """Relabel clusters at every time, new cluster `k` being old
        cluster `order[k]`"""
        index = np.asarray(order)
        return ParamsSeries(
            self.times,
            self.pi[:, index],
            self.mu[:, index],
            self.sigma[:, index],
        )

    def check_aligned(self, series: CytoSeries) -> None:
        """Raise unless the parameters live on the series' time grid

        Raises:
            ValidationError: On a mismatch in time points or dimension
        """
        if len(self) != len(series) or not np.array_equal(
            self.times, series.times
        ):
            raise ValidationError(
                f"Parameters on {len(self)} times do not match the series' "
                f"{len(series)} timestamps"
            )
        if self.dim != series.dim:
            raise ValidationError(
                f"Parameters are {self.dim}-d but the series is "
                f"{series.dim}-d"
            )


@dataclass(frozen=True)
class Responsibilities:
    """Soft assignments per time plus the derived cluster masses"""

    gamma: Tuple[FloatArray, ...]
    cluster_mass: FloatArray

    def __post_init__(self) -> None:
        gamma = tuple(_frozen(g) for g in self.gamma)
        mass = np.array(self.cluster_mass, dtype=float)
        if mass.ndim != 2 or mass.shape[0] != len(gamma):
            raise ValidationError(
                f"Cluster mass shape {mass.shape} does not match "
                f"{len(gamma)} times"
            )
        for index, g in enumerate(gamma):
            if g.ndim != 2 or g.shape[1] != mass.shape[1]:
                raise ValidationError(
                    f"Responsibilities at time index {index} have shape "
                    f"{g.shape}, expected (n, {mass.shape[1]})"
                )
            if np.any(g < 0) or np.any(
                np.abs(g.sum(axis=1) - 1) > SUM_TOLERANCE
            ):
                raise ValidationError(
                    f"Responsibilities at time index {index} are not "
                    "probability rows"
                )
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "cluster_mass", _frozen(mass))

    @classmethod
    def from_gamma(
        cls, series: CytoSeries, gamma: Sequence[FloatArray]
    ) -> Responsibilities:
        mass = np.stack(
            [
                cytogram.weights @ g
                for cytogram, g in zip(series.cytograms, gamma)
            ]
        )
        return cls(tuple(gamma), mass)

    def __len__(self) -> int:
        return len(self.gamma)

    @property
    def K(self) -> int:
        return self.cluster_mass.shape[1]

    def hard_labels(self) -> List[IntArray]:
        """Argmax labels, for diagnostics"""
        return [np.argmax(g, axis=1) for g in self.gamma]

    def subset(self, indices: Sequence[int]) -> Responsibilities:
        ordered = sorted(indices)
        return Responsibilities(
            tuple(self.gamma[i] for i in ordered),
            self.cluster_mass[np.asarray(ordered)],
        )

    def permuted(self, order: Sequence[int]) -> Responsibilities:
        index = np.asarray(order)
        return Responsibilities(
            tuple(g[:, index] for g in self.gamma),
            self.cluster_mass[:, index],
        )


def _check_parameters(
    pi: FloatArray, sigma: FloatArray, times: Optional[FloatArray] = None
) -> None:
    if np.any(pi < -SUM_TOLERANCE) or np.any(pi > 1 + SUM_TOLERANCE):
        raise ValidationError("Mixing proportions must lie in [0, 1]")
    bad = np.flatnonzero(np.abs(pi.sum(axis=-1) - 1) > SUM_TOLERANCE)
    if bad.size:
        raise ValidationError(
            f"Mixing proportions do not sum to 1 at {_where(bad, times)}"
        )
    asymmetry = np.abs(sigma - np.swapaxes(sigma, -1, -2))
    if np.any(asymmetry > SYMMETRY_TOLERANCE * np.maximum(1, np.abs(sigma))):
        raise ValidationError("Covariances must be symmetric")
    eigen = np.linalg.eigvalsh(sigma)
    bad_cells = np.argwhere(eigen[..., 0] <= 0)
    if bad_cells.size:
        t, k = bad_cells[0]
        raise ValidationError(
            f"Covariance of cluster {k} at {_where([t], times)} "
            "is not positive definite"
        )


def _where(indices: Union[Sequence[int], np.ndarray], times) -> str:
    if times is None:
        return "the given state"
    return "t=" + ", ".join(str(times[i]) for i in indices)
