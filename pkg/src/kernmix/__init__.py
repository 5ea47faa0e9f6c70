from importlib.metadata import version

from .base.hydrator import Hydrator
from .base.kernel import Bandwidths, Kernel, KernelSpec
from .base.method import FitMethod
from .base.model import (
    Cytogram,
    CytoSeries,
    LabeledSeries,
    MixtureState,
    ParamsSeries,
    Responsibilities,
)
from .baselines import constant_fit, hungarian_fit
from .bench import ScenarioSpec, run_benchmark
from .crossval import BandwidthGrid, cv_score, grid_search, make_folds
from .decorator import register
from .initialization import InitConfig, initialize
from .io import load_fit, load_series, write_fit, write_series
from .kernel_em import FitConfig, FitResult, fit, predict_at_times
from .kernmix import Kernmix
from .methods import ConstantMethod, HungarianMethod, KernelEMMethod
from .simulate import gen_disappearance, gen_intersection, rand_index
from .theory import TheoryScenario, run_theory_check

__version__ = version("kernmix")

__all__ = (
    "register",
    "fit",
    "predict_at_times",
    "initialize",
    "constant_fit",
    "hungarian_fit",
    "cv_score",
    "grid_search",
    "make_folds",
    "gen_disappearance",
    "gen_intersection",
    "rand_index",
    "run_benchmark",
    "run_theory_check",
    "load_series",
    "load_fit",
    "write_fit",
    "write_series",
    "Bandwidths",
    "BandwidthGrid",
    "ConstantMethod",
    "Cytogram",
    "CytoSeries",
    "FitConfig",
    "FitMethod",
    "FitResult",
    "HungarianMethod",
    "Hydrator",
    "InitConfig",
    "Kernel",
    "KernelEMMethod",
    "KernelSpec",
    "Kernmix",
    "LabeledSeries",
    "MixtureState",
    "ParamsSeries",
    "Responsibilities",
    "ScenarioSpec",
    "TheoryScenario",
)
