import re
from typing import Dict, Iterable, List

import numpy as np

from kernmix.base.kernel import Bandwidths
from kernmix.exception import ConfigError, ValidationError

LOG_GRID = re.compile(r"^log:([^:]+):([^:]+):(\d+)$")
LIN_GRID = re.compile(r"^lin:([^:]+):([^:]+):(\d+)$")
CLUSTER_GROUP = re.compile(r"^([^=\s]+)=(\d+(?:\+\d+)*)$")
NAME_LIST = re.compile(r"\s*,\s*")


def parse_grid(text: str) -> List[float]:
    """Read a list of numbers from a command-line value

    Accepts an explicit list (`"1,5,20"`), a log-spaced grid
    (`"log:1:350:7"`) or a linear grid (`"lin:0:1:3"`), the last two
    written as `kind:start:stop:count` with both ends included.

    Raises:
        ConfigError: If the value matches none of these forms
    """
    if isinstance(text, (list, tuple)):
        return [_number(str(part)) for part in text]
    text = str(text).strip()
    for pattern, space in ((LOG_GRID, np.geomspace), (LIN_GRID, np.linspace)):
        match = pattern.match(text)
        if match:
            start, stop = _number(match.group(1)), _number(match.group(2))
            count = int(match.group(3))
            if count < 1:
                raise ConfigError(f"Grid {text!r} needs at least one value")
            if space is np.geomspace and (start <= 0 or stop <= 0):
                raise ConfigError(f"Log grid {text!r} must be positive")
            return [float(v) for v in space(start, stop, count)]
    values = [_number(part) for part in text.split(",") if part.strip()]
    if not values:
        raise ConfigError(f"Could not read any value from {text!r}")
    return values


def parse_bandwidths(text: str) -> Bandwidths:
    """Read `h_pi,h_mu,h_sigma`, or one value used for all three"""
    values = parse_grid(text)
    if len(values) == 1:
        values = values * 3
    if len(values) != 3:
        raise ConfigError(
            f"Expected 1 or 3 bandwidths (h_pi,h_mu,h_sigma), got {text!r}"
        )
    try:
        return Bandwidths(*values)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def parse_names(text: str) -> List[str]:
    """Split a comma separated list of names"""
    if isinstance(text, (list, tuple)):
        return [str(name) for name in text]
    names = [name for name in NAME_LIST.split(str(text).strip()) if name]
    if not names:
        raise ConfigError(f"Could not read any name from {text!r}")
    return names


def parse_groups(entries: Iterable[str]) -> Dict[str, List[int]]:
    """Read `name=0+7` cluster group definitions"""
    groups = {}
    for entry in entries:
        match = CLUSTER_GROUP.match(entry.strip())
        if not match:
            raise ConfigError(
                f"Could not read cluster group {entry!r}. Use name=0+7"
            )
        name, clusters = match.groups()
        groups[name] = [int(k) for k in clusters.split("+")]
    return groups


def _number(text: str) -> float:
    try:
        value = float(text)
    except ValueError as e:
        raise ConfigError(f"{text!r} is not a number") from e
    if not np.isfinite(value):
        raise ConfigError(f"{text!r} is not a finite number")
    return value
