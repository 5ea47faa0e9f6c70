import logging

from kernmix.bench import BenchRecord, BenchResult, ScenarioSpec
from kernmix.crossval import CVResult
from kernmix.report import (
    log_benchmark_report,
    log_grid_report,
    render_benchmark_report,
    render_grid_report,
)


def _bench_result():
    spec = ScenarioSpec("disappearance", values=(5, 20), T=30)
    records = (
        BenchRecord("kernel-em", 5.0, 0, 0.9),
        BenchRecord("kernel-em", 5.0, 1, 0.8),
        BenchRecord("kernel-em", 20.0, 0, 0.7),
        BenchRecord("kernel-em", 20.0, 1, None, "KernmixError: boom"),
        BenchRecord("constant", 5.0, 0, 0.6),
        BenchRecord("constant", 5.0, 1, 0.6),
        BenchRecord("constant", 20.0, 0, 0.5),
        BenchRecord("constant", 20.0, 1, 0.4),
    )
    return BenchResult(spec, ("kernel-em", "constant"), 2, records)


def _cv_result():
    grid = ((1.0, 10.0), (1.0, 100.0), (5.0, 10.0), (5.0, 100.0))
    return CVResult(
        grid=grid,
        h_sigma=15.0,
        scores=(-3.5, float("nan"), -2.25, -2.75),
        best=(5.0, 10.0),
        per_fold=((-3.5,), (), (-2.25,), (-2.75,)),
        failures={1: "KernelSupportError: out of reach"},
    )


def test_benchmark_report_layout():
    report = render_benchmark_report(_bench_result())
    lines = report.splitlines()

    assert lines[0].strip() == "RAND INDEX BY DURATION"
    assert lines[2].split(" | ")[0].strip() == "method"
    assert set(lines[3]) == {"="}
    assert "   0.8500 |    0.7000" in lines[4]
    assert lines[5].strip().startswith("constant")
    assert "STANDARD ERROR" in report
    assert report.rstrip().endswith("1 failed run(s)")


def test_benchmark_report_marks_missing_error():
    report = render_benchmark_report(_bench_result())
    errors = report.split("STANDARD ERROR")[1]

    row = next(line for line in errors.splitlines() if "kernel-em" in line)
    assert row.rstrip().endswith("-")


def test_grid_report_layout():
    report = render_grid_report(_cv_result())
    lines = report.splitlines()

    assert lines[0].strip() == "CV LOG-LIKELIHOOD (h_sigma=15)"
    assert lines[2].split(" | ") == ["h_mu", "       10", "      100"]
    assert lines[4] == "   1 |     -3.50 |         -"
    assert lines[5] == "   5 |     -2.25 |     -2.75"
    assert report.rstrip().endswith("best: h_mu=5, h_pi=10")


def test_reports_are_logged_once(caplog):
    logger = logging.getLogger("kernmix")

    log_benchmark_report(logger, _bench_result())
    log_grid_report(logger, _cv_result())

    assert [r.message.splitlines()[0] for r in caplog.records] == [
        "Benchmark Report",
        "Bandwidth Search Report",
    ]
