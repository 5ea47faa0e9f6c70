from __future__ import annotations

from logging import Logger
from typing import List, Sequence

import numpy as np

from kernmix.bench import BenchResult
from kernmix.crossval import CVResult

COLUMN_SIZE = 9


def _cell(value: float, digits: int = 4) -> str:
    if value is None or not np.isfinite(value):
        return "-".rjust(COLUMN_SIZE)
    return f"{value:.{digits}f}".rjust(COLUMN_SIZE)


def _table(
    title: str,
    corner: str,
    columns: Sequence[str],
    rows: Sequence[List[str]],
    width: int,
) -> str:
    headers = " | ".join(
        [corner.rjust(width), *[c.rjust(COLUMN_SIZE) for c in columns]]
    )
    body = "\n".join(" | ".join(row) for row in rows)
    divider = "=" * len(headers)
    heading = title.center(len(divider))
    return f"{heading}\n\n{headers}\n{divider}\n{body}\n"


def render_benchmark_report(result: BenchResult) -> str:
    """Mean Rand index per method (rows) and parameter value (columns),
    followed by the standard errors"""
    summary = {(row.method, row.value): row for row in result.summary()}
    values = [float(v) for v in result.spec.values]
    width = max(map(len, [*result.methods, "SE"]))
    means = [
        [
            name.rjust(width),
            *[_cell(summary[(name, v)].mean) for v in values],
        ]
        for name in result.methods
    ]
    errors = [
        [
            name.rjust(width),
            *[_cell(summary[(name, v)].se) for v in values],
        ]
        for name in result.methods
    ]
    columns = [f"{v:g}" for v in values]
    title = f"RAND INDEX BY {result.spec.parameter.upper()}"
    failed = sum(row.failed for row in summary.values())
    return (
        _table(title, "method", columns, means, width)
        + "\n"
        + _table("STANDARD ERROR", "method", columns, errors, width)
        + f"\n{failed} failed run(s)\n"
    )


def render_grid_report(result: CVResult) -> str:
    """CV score per `h_mu` (rows) and `h_pi` (columns)"""
    mus = sorted({cell[0] for cell in result.grid})
    pis = sorted({cell[1] for cell in result.grid})
    scores = dict(zip(result.grid, result.scores))
    width = max(len("h_mu"), *(len(f"{m:g}") for m in mus))
    rows = [
        [
            f"{m:g}".rjust(width),
            *[_cell(scores.get((m, p), np.nan), 2) for p in pis],
        ]
        for m in mus
    ]
    h_mu, h_pi = result.best
    title = f"CV LOG-LIKELIHOOD (h_sigma={result.h_sigma:g})"
    return (
        _table(title, "h_mu", [f"{p:g}" for p in pis], rows, width)
        + f"\nbest: h_mu={h_mu:g}, h_pi={h_pi:g}\n"
    )


def log_benchmark_report(logger: Logger, result: BenchResult) -> None:
    logger.info(f"Benchmark Report\n\n{render_benchmark_report(result)}")


def log_grid_report(logger: Logger, result: CVResult) -> None:
    logger.info(f"Bandwidth Search Report\n\n{render_grid_report(result)}")
