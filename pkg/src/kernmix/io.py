from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from kernmix.base.hydrator import Hydrator
from kernmix.base.model import (
    Cytogram,
    CytoSeries,
    Event,
    LabeledSeries,
    ParamsSeries,
    Responsibilities,
)
from kernmix.exception import KernmixError, ParseError, ValidationError
from kernmix.kernel_em import FitResult
from kernmix.log import logger

FORMAT_VERSION = "1"
FLOAT_FORMAT = "%.17g"
COORDINATE = re.compile(r"^x(\d+)$")

PathLike = Union[str, Path]


def atomic_write(path: PathLike, text: str) -> None:
    """Replace `path` with `text` in one step

    The text goes to a temporary file next to the target, which is then
    renamed over it.

    Raises:
        KernmixError: If the file cannot be written
    """
    target = Path(path)
    try:
        with tempfile.NamedTemporaryFile(
            "w",
            encoding="utf-8",
            dir=target.parent,
            prefix=f".{target.name}.",
            delete=False,
            newline="",
        ) as handle:
            handle.write(text)
        os.replace(handle.name, target)
    except OSError as e:
        raise KernmixError(f"Cannot write {target}: {e}") from e
    logger.debug(f"Wrote {target}")


def dump_json(document: Dict[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def write_json(document: Dict[str, Any], path: PathLike) -> None:
    atomic_write(path, dump_json(document))


def write_frame(frame: pd.DataFrame, path: PathLike) -> None:
    """Write a table as CSV with round-trip float formatting"""
    buffer = StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT)
    atomic_write(path, buffer.getvalue())


def load_series(path: PathLike) -> Union[CytoSeries, LabeledSeries]:
    """Read a cytogram series from CSV

    The header must be `time,x1,...,xd` followed by an optional `weight`
    and an optional `label` column. Rows sharing a time value form one
    cytogram and must be contiguous; cytograms are ordered by time. A
    missing `weight` column means every weight is 1.

    Args:
        path (PathLike): The CSV file

    Raises:
        ParseError: On malformed input, naming the 1-based file row

    Returns:
        Union[CytoSeries, LabeledSeries]: A labeled series when the file
            has a `label` column
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except (OSError, UnicodeDecodeError) as e:
        raise ParseError(f"Cannot read {path}: {e}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"{path}: {e}") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    coordinates, has_weight, has_label = _check_header(path, frame.columns)
    if frame.empty:
        raise ParseError(f"{path}: no data rows")
    missing = (frame.isna() | (frame == "")).to_numpy()
    if missing.any():
        row, column = np.argwhere(missing)[0]
        raise ParseError(
            f"{path}, row {row + 2}: missing {frame.columns[column]} value"
        )

    rows = np.arange(len(frame)) + 2
    times = _numbers(path, frame, "time", rows)
    points = np.column_stack(
        [_numbers(path, frame, name, rows) for name in coordinates]
    )
    if has_weight:
        weights = _numbers(path, frame, "weight", rows)
        negative = np.flatnonzero(weights < 0)
        if negative.size:
            raise ParseError(
                f"{path}, row {rows[negative[0]]}: negative weight"
            )
    else:
        weights = np.ones(len(frame))
    labels = frame["label"].to_numpy(dtype=str) if has_label else None

    starts = np.flatnonzero(np.r_[True, times[1:] != times[:-1]])
    seen: Dict[float, int] = {}
    for start in starts:
        if times[start] in seen:
            raise ParseError(
                f"{path}, row {rows[start]}: time {times[start]:g} "
                f"reappears after row {seen[times[start]]}; rows of one "
                "time must be contiguous"
            )
        seen[times[start]] = int(rows[start])
    bounds = list(zip(starts, np.r_[starts[1:], len(frame)]))
    bounds.sort(key=lambda bound: times[bound[0]])

    cytograms, label_rows = [], []
    for start, stop in bounds:
        try:
            cytograms.append(
                Cytogram(
                    times[start], points[start:stop], weights[start:stop]
                )
            )
        except ValidationError as e:
            raise ParseError(f"{path}, row {rows[start]}: {e}") from e
        if labels is not None:
            label_rows.append(tuple(labels[start:stop]))
    series = CytoSeries(tuple(cytograms))
    logger.info(f"Loaded {len(series)} cytogram(s) from {path}")
    if labels is not None:
        return LabeledSeries(series, tuple(label_rows))
    return series


def write_series(
    series: Union[CytoSeries, LabeledSeries], path: PathLike
) -> None:
    """Write a series in the format `load_series` reads"""
    labels = None
    if isinstance(series, LabeledSeries):
        labels = [label for row in series.labels for label in row]
        series = series.series
    frame = pd.DataFrame(
        {
            "time": np.concatenate(
                [np.full(c.n, c.time) for c in series.cytograms]
            )
        }
    )
    points = np.concatenate([c.points for c in series.cytograms])
    for j in range(series.dim):
        frame[f"x{j + 1}"] = points[:, j]
    frame["weight"] = np.concatenate([c.weights for c in series.cytograms])
    if labels is not None:
        frame["label"] = labels
    write_frame(frame, path)


@dataclass(frozen=True)
class StoredFit:
    """A fitted model as kept on disk"""

    params: ParamsSeries
    loglik_trace: Tuple[float, ...]
    events: Tuple[Event, ...] = ()
    converged: bool = False
    config: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_result(
        cls, result: FitResult, config: Optional[Dict[str, Any]] = None
    ) -> StoredFit:
        return cls(
            params=result.params,
            loglik_trace=tuple(float(v) for v in result.loglik_trace),
            events=tuple(result.events),
            converged=bool(result.converged),
            config=dict(config or {}),
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> StoredFit:
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise ParseError(f"Unsupported fit format version {version!r}")
        hydrator = Hydrator()
        states = data["params"]
        try:
            params = ParamsSeries(
                times=[s["time"] for s in states],
                pi=[s["pi"] for s in states],
                mu=[s["mu"] for s in states],
                sigma=[s["sigma"] for s in states],
            )
        except ValidationError as e:
            raise ParseError(f"Stored parameters are invalid: {e}") from e
        return cls(
            params=params,
            loglik_trace=tuple(float(v) for v in data["loglik_trace"]),
            events=tuple(hydrator.many(data["events"], Event)),
            converged=bool(data["converged"]),
            config=hydrator.hydrate(data["config"]),
        )

    def to_dict(self) -> Dict[str, Any]:
        p = self.params
        return {
            "format_version": FORMAT_VERSION,
            "K": p.K,
            "dim": p.dim,
            "params": [
                {
                    "time": float(p.times[t]),
                    "pi": p.pi[t].tolist(),
                    "mu": p.mu[t].tolist(),
                    "sigma": p.sigma[t].tolist(),
                }
                for t in range(len(p))
            ],
            "loglik_trace": list(self.loglik_trace),
            "events": [event.to_dict() for event in self.events],
            "converged": self.converged,
            "config": self.config,
        }


def write_fit(
    fit: Union[FitResult, StoredFit],
    path: PathLike,
    config: Optional[Dict[str, Any]] = None,
) -> None:
    """Write a fit as canonical JSON; rewriting a loaded fit reproduces
    the file byte for byte"""
    if isinstance(fit, FitResult):
        fit = StoredFit.from_result(fit, config)
    write_json(fit.to_dict(), path)


def load_fit(path: PathLike) -> StoredFit:
    """Read a fit written by `write_fit`

    Raises:
        ParseError: If the file is missing, not JSON or not a fit
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}, row {e.lineno}: {e.msg}") from e
    try:
        return Hydrator().hydrate(data, StoredFit)
    except (KeyError, TypeError) as e:
        raise ParseError(f"{path}: missing or malformed field {e}") from e


def write_responsibilities(
    series: CytoSeries, resp: Responsibilities, path: PathLike
) -> None:
    """One CSV row per point: `time, point, gamma_0 .. gamma_{K-1}`"""
    frame = pd.DataFrame(
        {
            "time": np.concatenate(
                [np.full(c.n, c.time) for c in series.cytograms]
            ),
            "point": np.concatenate(
                [np.arange(c.n) for c in series.cytograms]
            ),
        }
    )
    gamma = np.concatenate(resp.gamma)
    for k in range(resp.K):
        frame[f"gamma_{k}"] = gamma[:, k]
    write_frame(frame, path)


def load_responsibilities(
    path: PathLike, series: CytoSeries
) -> Responsibilities:
    """Read responsibilities for `series`, re-validating every row

    Raises:
        ParseError: If the file does not match the series or a row is not
            a probability vector
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"Cannot read {path}: {e}") from e
    columns = [c for c in frame.columns if c.startswith("gamma_")]
    if not columns or len(frame) != sum(c.n for c in series):
        raise ParseError(
            f"{path}: expected {sum(c.n for c in series)} rows of gamma_* "
            "columns matching the series"
        )
    gamma = frame[columns].to_numpy(dtype=float)
    splits = np.cumsum([c.n for c in series.cytograms])[:-1]
    try:
        return Responsibilities.from_gamma(series, np.split(gamma, splits))
    except ValidationError as e:
        raise ParseError(f"{path}: {e}") from e


def _check_header(
    path: Path, columns: pd.Index
) -> Tuple[List[str], bool, bool]:
    names = list(columns)
    if not names or names[0] != "time":
        raise ParseError(f"{path}, row 1: header must start with 'time'")
    coordinates = []
    for name in names[1:]:
        match = COORDINATE.match(name)
        if match:
            if int(match.group(1)) != len(coordinates) + 1:
                raise ParseError(
                    f"{path}, row 1: expected x{len(coordinates) + 1}, "
                    f"got {name}"
                )
            coordinates.append(name)
    if not coordinates:
        raise ParseError(f"{path}, row 1: no x1..xd coordinate columns")
    extra = names[1 + len(coordinates) :]
    if extra not in ([], ["weight"], ["label"], ["weight", "label"]):
        raise ParseError(
            f"{path}, row 1: unexpected columns {extra}; only weight and "
            "label may follow the coordinates"
        )
    return coordinates, "weight" in extra, "label" in extra


def _numbers(
    path: Path, frame: pd.DataFrame, column: str, rows: np.ndarray
) -> np.ndarray:
    try:
        values = frame[column].to_numpy(dtype=str).astype(float)
    except ValueError:
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy(
            dtype=float
        )
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ParseError(
            f"{path}, row {rows[bad[0]]}: {column} value "
            f"{frame[column].iloc[bad[0]]!r} is not a finite number"
        )
    return values
