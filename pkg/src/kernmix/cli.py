from __future__ import annotations

import json
import logging
import sys
from argparse import ArgumentParser, Namespace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from kernmix.base.kernel import DEFAULT_CUTOFF, KernelSpec
from kernmix.base.method import FitMethod
from kernmix.base.model import CytoSeries, LabeledSeries
from kernmix.bench import LABEL_MODES, ScenarioSpec, run_benchmark
from kernmix.config import RunConfig, load_defaults
from kernmix.convert import (
    parse_bandwidths,
    parse_grid,
    parse_groups,
    parse_names,
)
from kernmix.crossval import DEFAULT_FOLDS, BandwidthGrid
from kernmix.evaluate import biomass_frame, confusion_matrix
from kernmix.exception import KernmixError, ValidationError
from kernmix.initialization import INIT_METHODS, InitConfig
from kernmix.io import (
    load_fit,
    load_series,
    write_fit,
    write_frame,
    write_json,
    write_responsibilities,
    write_series,
)
from kernmix.kernel_em import expectation
from kernmix.kernmix import Kernmix
from kernmix.log import logger
from kernmix.methods import ConstantMethod, HungarianMethod, KernelEMMethod
from kernmix.report import log_benchmark_report, log_grid_report
from kernmix.simulate import SCENARIOS
from kernmix.theory import TheoryScenario, run_theory_check

VERBOSITY = (logging.WARNING, logging.INFO, logging.DEBUG)
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

Handler = Callable[[ArgumentParser, Namespace, RunConfig], None]


def make_parser() -> Tuple[ArgumentParser, Dict[str, ArgumentParser]]:
    """The top level parser and the parser of every subcommand"""
    parser = ArgumentParser(
        prog="kernmix",
        description=(
            "Fit smoothly time-varying Gaussian mixtures to cytogram series"
        ),
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    commands = {}

    fit = subparsers.add_parser("fit", help="fit kernel-EM to a series")
    _common(fit)
    _inputs(fit)
    _model_options(fit)
    fit.add_argument(
        "--bandwidths",
        help="h_pi,h_mu,h_sigma in hours, or one value for all three",
    )
    _grid_options(fit)
    fit.add_argument("--output", help="fit JSON to write")
    fit.add_argument(
        "--responsibilities", help="optional per-point responsibility CSV"
    )
    fit.set_defaults(handler=run_fit)
    commands["fit"] = fit

    cv = subparsers.add_parser(
        "cv", help="select h_mu and h_pi by cross-validation"
    )
    _common(cv)
    _inputs(cv)
    _model_options(cv)
    _grid_options(cv)
    cv.add_argument("--output", help="CV result JSON to write")
    cv.set_defaults(handler=run_cv)
    commands["cv"] = cv

    simulate = subparsers.add_parser(
        "simulate", help="draw a labeled series from a scenario"
    )
    _common(simulate)
    _scenario_options(simulate)
    simulate.add_argument(
        "--value",
        type=float,
        help="duration (disappearance) or overlap level (intersection)",
    )
    simulate.add_argument("--output", help="labeled series CSV to write")
    simulate.add_argument("--truth", help="optional truth JSON to write")
    simulate.set_defaults(handler=run_simulate)
    commands["simulate"] = simulate

    bench = subparsers.add_parser(
        "bench", help="compare methods over a scenario sweep"
    )
    _common(bench)
    _scenario_options(bench)
    _model_options(bench, required_k=False)
    bench.add_argument(
        "--values",
        "--durations",
        "--overlap-levels",
        dest="values",
        help="parameter values, e.g. 5,20,60 or lin:0:1:5",
    )
    bench.add_argument(
        "--methods",
        default="kernel-em,hungarian,constant",
        help="comma separated method names",
    )
    bench.add_argument("--runs", type=int, default=100)
    bench.add_argument(
        "--bandwidths",
        help="kernel-EM bandwidths h_pi,h_mu,h_sigma. Defaults to 5,5,5.",
    )
    bench.add_argument(
        "--label-mode", choices=LABEL_MODES, default="sampled"
    )
    bench.add_argument("--output", help="per-run CSV to write")
    bench.add_argument("--summary", help="optional summary JSON to write")
    bench.set_defaults(handler=run_bench)
    commands["bench"] = bench

    evaluate = subparsers.add_parser(
        "evaluate", help="biomass and confusion tables of a fit"
    )
    _common(evaluate)
    _inputs(evaluate)
    evaluate.add_argument("--fit", help="fit JSON written by `fit`")
    evaluate.add_argument(
        "--groups",
        nargs="*",
        default=[],
        help="named cluster groups such as pro=0+7",
    )
    evaluate.add_argument("--biomass", help="biomass CSV to write")
    evaluate.add_argument("--confusion", help="confusion CSV to write")
    evaluate.add_argument(
        "--counts",
        action="store_true",
        help="report biomass instead of column shares in the confusion",
    )
    evaluate.set_defaults(handler=run_evaluate)
    commands["evaluate"] = evaluate

    theory = subparsers.add_parser(
        "theory-check", help="Monte-Carlo check of the oracle estimator"
    )
    _common(theory)
    theory.add_argument("--T", type=int, default=41)
    theory.add_argument("--n", type=int, default=20)
    theory.add_argument("--sigma", type=float, default=0.5)
    theory.add_argument("--kernel", default="gaussian")
    theory.add_argument("--bandwidth", type=float, default=0.2)
    theory.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF)
    theory.add_argument("--reps", type=int, default=1000)
    theory.add_argument("--output", help="report JSON to write")
    theory.add_argument("--table", help="optional per-time CSV to write")
    theory.add_argument(
        "--strict",
        action="store_true",
        help="exit with an error if any verdict fails",
    )
    theory.set_defaults(handler=run_theory)
    commands["theory-check"] = theory

    return parser, commands


def parse_args(argv: Optional[Sequence[str]] = None) -> Namespace:
    """Parse the command line, taking defaults from `--config` if given

    Values in the config file replace the built-in defaults; flags given
    on the command line still win.
    """
    parser, commands = make_parser()
    args = parser.parse_args(argv)
    if args.config:
        defaults = load_defaults(args.config, vars(args))
        commands[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    args.parser = commands[args.command]
    return args


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code

    Errors of the library are printed to stderr as a JSON object with the
    error class and message and give exit code 1. Usage errors give 2.
    """
    try:
        args = parse_args(argv)
        _configure_logging(args.verbose)
        handler: Handler = args.handler
        parser = args.parser
        del args.parser
        handler(parser, args, RunConfig.from_namespace(args))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except KernmixError as e:
        error = {"error": e.__class__.__name__, "message": str(e)}
        sys.stderr.write(json.dumps(error, sort_keys=True) + "\n")
        return 1
    return 0


def main() -> None:
    sys.exit(cli_main())


def run_fit(parser: ArgumentParser, args: Namespace, run: RunConfig) -> None:
    _require(parser, args, "input", "output", "K")
    if (args.bandwidths is None) == (args.h_sigma is None):
        parser.error("pass exactly one of --bandwidths and --h-sigma")
    series = _plain(load_series(args.input))
    model = _model(args)
    result = model.fit(series)
    if model.cv_result is not None:
        log_grid_report(logger, model.cv_result)
    bandwidths = model.bandwidths
    config = run.echo()
    config["selected_bandwidths"] = [
        bandwidths.h_pi,
        bandwidths.h_mu,
        bandwidths.h_sigma,
    ]
    write_fit(result, args.output, config)
    if args.responsibilities:
        write_responsibilities(series, result.resp, args.responsibilities)


def run_cv(parser: ArgumentParser, args: Namespace, run: RunConfig) -> None:
    _require(parser, args, "input", "output", "K", "h_sigma")
    series = _plain(load_series(args.input))
    result = _model(args).cross_validate(series)
    log_grid_report(logger, result)
    document = result.to_dict()
    document["config"] = run.echo()
    write_json(document, args.output)


def run_simulate(
    parser: ArgumentParser, args: Namespace, run: RunConfig
) -> None:
    _require(parser, args, "output")
    generator, parameter = SCENARIOS[args.scenario]
    options = {
        "T": args.T,
        "n_per_time": args.n_per_time,
        "sigma": args.sigma,
        "seed": args.seed,
    }
    if args.value is not None:
        value = args.value
        options[parameter] = int(value) if parameter == "duration" else value
    truth = generator(**options)
    write_series(truth.labeled(), args.output)
    if args.truth:
        write_json(truth.to_dict(), args.truth)


def run_bench(parser: ArgumentParser, args: Namespace, run: RunConfig) -> None:
    _require(parser, args, "values", "output")
    spec = ScenarioSpec(
        args.scenario,
        tuple(parse_grid(args.values)),
        T=args.T,
        n_per_time=args.n_per_time,
        sigma=args.sigma,
        K=args.K or 2,
    )
    result = run_benchmark(
        spec,
        _bench_methods(args),
        runs=args.runs,
        seed=args.seed,
        workers=args.workers,
        label_mode=args.label_mode,
    )
    log_benchmark_report(logger, result)
    write_frame(result.to_frame(), args.output)
    if args.summary:
        document = result.to_dict()
        document["config"] = run.echo()
        write_json(document, args.summary)


def run_evaluate(
    parser: ArgumentParser, args: Namespace, run: RunConfig
) -> None:
    _require(parser, args, "input", "fit")
    if not (args.biomass or args.confusion):
        parser.error("pass --biomass and/or --confusion")
    loaded = load_series(args.input)
    series = _plain(loaded)
    stored = load_fit(args.fit)
    resp, _ = expectation(series, stored.params)
    if args.biomass:
        groups = parse_groups(args.groups or [])
        write_frame(biomass_frame(series, resp, groups), args.biomass)
    if args.confusion:
        if not isinstance(loaded, LabeledSeries):
            raise ValidationError(
                f"{args.input} has no label column; the confusion table "
                "needs labeled points"
            )
        table = confusion_matrix(resp, loaded, normalize=not args.counts)
        frame = table.to_frame().rename_axis("cluster").reset_index()
        write_frame(frame, args.confusion)


def run_theory(
    parser: ArgumentParser, args: Namespace, run: RunConfig
) -> None:
    _require(parser, args, "output")
    scenario = TheoryScenario(
        T=args.T,
        n=args.n,
        sigma=args.sigma,
        family=args.kernel,
        bandwidth=args.bandwidth,
        cutoff=args.cutoff,
        reps=args.reps,
        seed=args.seed,
    )
    report = run_theory_check(scenario, workers=args.workers)
    write_json(report.to_dict(), args.output)
    if args.table:
        write_frame(report.to_frame(), args.table)
    failed = [name for name, ok in report.verdicts.items() if not ok]
    if args.strict and failed:
        raise KernmixError(f"Theory check failed: {', '.join(failed)}")


def _common(parser: ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for every iteration",
    )
    parser.add_argument(
        "--config", help="JSON object of option defaults for this command"
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="threads; results do not depend on it",
    )


def _inputs(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--input", help="series CSV: time,x1..xd[,weight][,label]"
    )


def _model_options(parser: ArgumentParser, required_k: bool = True) -> None:
    parser.add_argument(
        "-K",
        dest="K",
        type=int,
        help="number of clusters" + ("" if required_k else " (default 2)"),
    )
    parser.add_argument("--kernel", default="gaussian")
    parser.add_argument(
        "--cutoff",
        type=float,
        default=DEFAULT_CUTOFF,
        help="kernel support in bandwidths",
    )
    parser.add_argument("--init", choices=INIT_METHODS, default="constant")
    parser.add_argument("--n-times", type=int, default=50)
    parser.add_argument("--n-points-per-time", type=int, default=50)
    parser.add_argument("--max-iters", type=int, default=100)
    parser.add_argument("--tol", type=float, default=1e-6)


def _grid_options(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--h-sigma", type=float, help="fixed covariance bandwidth for CV"
    )
    parser.add_argument(
        "--grid-mu", help="h_mu candidates; defaults to 7 log-spaced values"
    )
    parser.add_argument(
        "--grid-pi", help="h_pi candidates; defaults to 7 log-spaced values"
    )
    parser.add_argument("--folds", type=int, default=DEFAULT_FOLDS)


def _scenario_options(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--scenario", choices=sorted(SCENARIOS), default="disappearance"
    )
    parser.add_argument("--T", type=int, default=100)
    parser.add_argument("--n-per-time", type=int, default=100)
    parser.add_argument("--sigma", type=float, default=0.5)


def _require(parser: ArgumentParser, args: Namespace, *names: str) -> None:
    missing = [name for name in names if getattr(args, name, None) is None]
    if missing:
        flags = ", ".join(_flag(name) for name in missing)
        parser.error(f"the following arguments are required: {flags}")


def _flag(name: str) -> str:
    return "-K" if name == "K" else "--" + name.replace("_", "-")


def _init_config(args: Namespace) -> InitConfig:
    return InitConfig(
        method=args.init,
        n_times=args.n_times,
        n_points_per_time=args.n_points_per_time,
        seed=args.seed,
    )


def _model(args: Namespace) -> Kernmix:
    bandwidths = (
        parse_bandwidths(args.bandwidths)
        if getattr(args, "bandwidths", None) is not None
        else None
    )
    grid = None
    if args.h_sigma is not None:
        grid = BandwidthGrid(
            args.h_sigma,
            mu=_optional_grid(args.grid_mu),
            pi=_optional_grid(args.grid_pi),
        )
    return Kernmix(
        K=args.K,
        bandwidths=bandwidths,
        grid=grid,
        kernel=KernelSpec(args.kernel, 1.0, args.cutoff),
        init=_init_config(args),
        max_iters=args.max_iters,
        tol=args.tol,
        n_folds=args.folds,
        workers=args.workers,
        seed=args.seed,
    )


def _optional_grid(text: Optional[str]) -> Optional[Tuple[float, ...]]:
    return None if text is None else tuple(parse_grid(text))


def _bench_methods(args: Namespace) -> List[Union[str, FitMethod]]:
    init = _init_config(args)
    methods: List[Union[str, FitMethod]] = []
    for name in parse_names(args.methods):
        if name == KernelEMMethod.name:
            options = {}
            if args.bandwidths is not None:
                options["bandwidths"] = parse_bandwidths(args.bandwidths)
            methods.append(
                KernelEMMethod(
                    family=args.kernel,
                    cutoff=args.cutoff,
                    init=init,
                    max_iters=args.max_iters,
                    tol=args.tol,
                    **options,
                )
            )
        elif name == ConstantMethod.name:
            methods.append(ConstantMethod(init))
        elif name == HungarianMethod.name:
            methods.append(HungarianMethod(init))
        else:
            methods.append(name)
    return methods


def _plain(series: object) -> CytoSeries:
    if isinstance(series, LabeledSeries):
        return series.series
    return series  # type: ignore


def _configure_logging(verbose: int) -> None:
    level = VERBOSITY[min(max(verbose, 0), len(VERBOSITY) - 1)]
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logger.setLevel(level)
