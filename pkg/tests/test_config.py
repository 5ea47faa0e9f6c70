import json
from argparse import Namespace

import pytest

from kernmix.base.kernel import Bandwidths
from kernmix.config import RunConfig, load_defaults
from kernmix.exception import ConfigError


@pytest.fixture
def namespace():
    return Namespace(
        command="fit",
        seed=3,
        input="series.csv",
        output="fit.json",
        responsibilities=None,
        K=2,
        bandwidths=Bandwidths(1, 2, 3),
        verbose=2,
        workers=4,
        config="defaults.json",
        handler=print,
    )


def test_from_namespace_splits_paths_and_options(namespace):
    config = RunConfig.from_namespace(namespace)

    assert config.command == "fit"
    assert config.seed == 3
    assert config.options == {"K": 2, "bandwidths": [1.0, 2.0, 3.0]}
    assert config.paths == {"input": "series.csv", "output": "fit.json"}


def test_echo_drops_output_paths(namespace):
    echo = RunConfig.from_namespace(namespace).echo()

    assert echo["paths"] == {"input": "series.csv"}
    assert echo["options"]["K"] == 2


def test_dict_round_trip(namespace):
    config = RunConfig.from_namespace(namespace)

    assert RunConfig.from_dict(config.to_dict()) == config


def test_empty_path_is_rejected():
    with pytest.raises(ConfigError, match="output path is empty"):
        RunConfig("fit", paths={"output": " "})


def test_load_defaults(tmp_path):
    path = tmp_path / "defaults.json"
    path.write_text(json.dumps({"--max-iters": 5, "tol": 1e-3, "h-sigma": 2}))

    defaults = load_defaults(path, ["max_iters", "tol", "h_sigma"])

    assert defaults == {"max_iters": 5, "tol": 1e-3, "h_sigma": 2}


@pytest.mark.parametrize(
    "text,match",
    (
        ('{"runs": 5}', "unknown option 'runs'"),
        ('{"tol": {"value": 1}}', "must not be nested"),
        ("[1, 2]", "JSON object"),
        ('{"tol": ', "row 1"),
        ('{"command": "bench"}', "unknown option"),
    ),
)
def test_load_defaults_rejects(tmp_path, text, match):
    path = tmp_path / "defaults.json"
    path.write_text(text)

    with pytest.raises(ConfigError, match=match):
        load_defaults(path, ["tol", "command"])


def test_load_defaults_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="Cannot read config"):
        load_defaults(tmp_path / "missing.json", ["tol"])
