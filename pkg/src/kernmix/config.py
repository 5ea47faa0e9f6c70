from __future__ import annotations

import json
from argparse import Namespace
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Union

from kernmix.base.kernel import Bandwidths
from kernmix.exception import ConfigError

PATH_OPTIONS = (
    "input",
    "fit",
    "output",
    "truth",
    "responsibilities",
    "summary",
    "table",
    "biomass",
    "confusion",
)
"""Options naming files, kept apart from the numerical settings"""

SKIPPED_OPTIONS = ("command", "config", "verbose", "workers", "handler")


@dataclass
class RunConfig:
    """Settings of one command line run

    `options` holds every numerical and categorical setting by option
    name and `paths` every file the command reads or writes. The worker
    count and verbosity are left out since they never change results.
    """

    command: str
    seed: int = 0
    options: Dict[str, Any] = field(default_factory=dict)
    paths: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, path in self.paths.items():
            if not str(path).strip():
                raise ConfigError(f"The {name} path is empty")

    @classmethod
    def from_namespace(cls, args: Namespace) -> RunConfig:
        options: Dict[str, Any] = {}
        paths: Dict[str, str] = {}
        for name, value in sorted(vars(args).items()):
            if name in SKIPPED_OPTIONS or name == "seed" or value is None:
                continue
            if name in PATH_OPTIONS:
                paths[name] = str(value)
            else:
                options[name] = _plain(value)
        return cls(args.command, int(args.seed), options, paths)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> RunConfig:
        return cls(
            command=data["command"],
            seed=int(data.get("seed", 0)),
            options=dict(data.get("options", {})),
            paths=dict(data.get("paths", {})),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "options": dict(self.options),
            "paths": dict(self.paths),
        }

    def echo(self) -> Dict[str, Any]:
        """The settings without output locations, for embedding in
        artifacts"""
        document = self.to_dict()
        document["paths"] = {
            name: path
            for name, path in self.paths.items()
            if name in ("input", "fit")
        }
        return document


def load_defaults(
    path: Union[str, Path], allowed: Iterable[str]
) -> Dict[str, Any]:
    """Read a flat JSON object of option values

    Keys are option names, with or without leading dashes and with
    dashes or underscores.

    Raises:
        ConfigError: If the file is unreadable, not a flat object or names
            an option the command does not have
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}, row {e.lineno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object of options")

    allowed = set(allowed) - {"command", "config", "handler"}
    defaults = {}
    for key, value in data.items():
        name = str(key).lstrip("-").replace("-", "_")
        if name not in allowed:
            raise ConfigError(
                f"{path}: unknown option {key!r} for this command"
            )
        if isinstance(value, dict):
            raise ConfigError(f"{path}: option {key!r} must not be nested")
        defaults[name] = value
    return defaults


def _plain(value: Any) -> Any:
    if isinstance(value, Bandwidths):
        return [value.h_pi, value.h_mu, value.h_sigma]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
