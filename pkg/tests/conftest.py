import logging

import numpy as np
import pytest

from kernmix.base.kernel import Bandwidths
from kernmix.initialization import InitConfig
from kernmix.kernel_em import FitConfig
from kernmix.registry import MethodRegistry

from .app.data import drifting_series, separated_series, true_params


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run long Monte-Carlo and benchmark tests",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def restore_registry():
    registered = dict(MethodRegistry())
    yield
    MethodRegistry.reset()
    for method in registered.values():
        MethodRegistry().register(method)


@pytest.fixture(autouse=True)
def kernmix_logging(caplog):
    caplog.set_level(logging.DEBUG, logger="kernmix")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def series():
    return drifting_series()


@pytest.fixture
def separated():
    return separated_series()


@pytest.fixture
def params(series):
    return true_params(series)


@pytest.fixture
def fit_config():
    return FitConfig(K=2, bandwidths=Bandwidths(3.0, 3.0, 3.0), max_iters=30)


@pytest.fixture
def init_config():
    return InitConfig(n_times=10, n_points_per_time=30, seed=7)
