from .hydrator import Hydrator
from .kernel import (
    Bandwidths,
    BoxcarKernel,
    GaussianKernel,
    Kernel,
    KernelSpec,
)
from .method import FitMethod
from .model import (
    Cytogram,
    CytoSeries,
    Event,
    LabeledSeries,
    MixtureState,
    ParamsSeries,
    Responsibilities,
)

__all__ = (
    "Bandwidths",
    "BoxcarKernel",
    "Cytogram",
    "CytoSeries",
    "Event",
    "FitMethod",
    "GaussianKernel",
    "Hydrator",
    "Kernel",
    "KernelSpec",
    "LabeledSeries",
    "MixtureState",
    "ParamsSeries",
    "Responsibilities",
)
