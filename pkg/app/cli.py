"""
Command-line entry point

    python -m app bayes --spec spec.json --seed 3 --out runs
    python -m app eb --solvers eb_amp,lasso,pseudoinverse
    python -m app spectrum --trials 20 --keep-spectra
    python -m app expand features.csv expanded.csv --normalize
    python -m app generate data/ --model bayes --n-features 10 --m 220 --seed 3
    python -m app solve data/ --solver eb_amp --priors data/priors.json --out result.json
    python -m app serve --port 8000

Exit code 2 when input fails to load or validate, 0 otherwise (solver divergence included).
Errors raised while a validated run is in progress propagate.
"""
import argparse
import logging
import sys
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional

from pydantic import ValidationError

from app import storage
from app.config import configure_logging, settings
from app.exceptions import InvalidInputError, StorageError
from app.schemas import (
    AmpConfig,
    AmpVariant,
    BayesModelSpec,
    ExperimentKind,
    ExperimentSpec,
    GroupPriorSet,
    LassoConfig,
    SinusoidSpec,
    SolverName,
)
from app.services.experiments import prepare_designs, run_experiment, run_solver
from app.services.kernel_expansion import expand_quadratic, normalize_columns
from app.services.synthetic_data import gen_bayes_dataset, gen_sinusoid_dataset


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2

EXPERIMENT_COMMANDS = {
    "bayes": ExperimentKind.BAYES,
    "eb": ExperimentKind.EMPIRICAL_BAYES,
    "spectrum": ExperimentKind.SPECTRUM,
}

DATASET_MODELS = {"bayes": BayesModelSpec, "sinusoid": SinusoidSpec}

INPUT_ERRORS = (ValidationError, ValueError, StorageError, FileNotFoundError)


@contextmanager
def validating_input() -> Iterator[None]:
    """Re-raise loading and validation failures as InvalidInputError"""
    try:
        yield
    except INPUT_ERRORS as error:
        raise InvalidInputError(str(error)) from error


def _solver_list(value: str) -> List[str]:
    return [name.strip() for name in value.split(",") if name.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkamp", description=settings.APP_NAME)
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, kind in EXPERIMENT_COMMANDS.items():
        sub = commands.add_parser(name, help=f"Run the {kind.value} experiment")
        sub.add_argument("--spec", default=None, help="ExperimentSpec JSON file")
        sub.add_argument("--seed", type=int, default=None, help="Master seed")
        sub.add_argument("--out", default=None, help=f"Output directory (default env:OUTPUT_DIR={settings.OUTPUT_DIR})")
        sub.add_argument("--trials", type=int, default=None)
        sub.add_argument("--workers", type=int, default=None)
        if kind is not ExperimentKind.SPECTRUM:
            sub.add_argument("--solvers", type=_solver_list, default=None,
                             help="Comma-separated subset of amp,eb_amp,lasso,pseudoinverse")
        if kind is ExperimentKind.EMPIRICAL_BAYES:
            sub.add_argument("--eb-diagnostics", action="store_true",
                             help="Write learned priors per AMP iteration as JSON lines")
        if kind is ExperimentKind.SPECTRUM:
            sub.add_argument("--keep-spectra", action="store_true", help="Store every trial's full spectrum")

    expand = commands.add_parser("expand", help="Expand a feature matrix with the quadratic kernel")
    expand.add_argument("input", help="Feature CSV or binary matrix")
    expand.add_argument("output", help="Expanded matrix CSV")
    expand.add_argument("--normalize", action="store_true", help="Scale columns to unit norm")
    expand.add_argument("--norms", default=None, help="Also write the column norms to this CSV")

    generate = commands.add_parser("generate", help="Write a synthetic dataset directory for `solve`")
    generate.add_argument("output", help="Dataset directory")
    generate.add_argument("--model", choices=sorted(DATASET_MODELS), default="bayes")
    generate.add_argument("--spec", default=None, help="BayesModelSpec or SinusoidSpec JSON file")
    generate.add_argument("--n-features", dest="n", type=int, default=None)
    generate.add_argument("--m", type=int, default=None, help="Rows before the test split")
    generate.add_argument("--k-test", type=int, default=None, help="Held-out rows (default m // 10)")
    generate.add_argument("--noise-var", type=float, default=None)
    generate.add_argument("--seed", type=int, default=None)

    solve = commands.add_parser("solve", help="Fit one solver on a dataset directory")
    solve.add_argument("dataset", help="Directory with x_train.csv, y_train.csv, x_test.csv, y_test.csv")
    solve.add_argument("--solver", choices=[s.value for s in SolverName], default=SolverName.AMP.value)
    solve.add_argument("--priors", default=None, help="GroupPriorSet JSON (amp only)")
    solve.add_argument("--damping", type=float, default=None)
    solve.add_argument("--max-iters", type=int, default=None)
    solve.add_argument("--variant", choices=[v.value for v in AmpVariant], default=None)
    solve.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="Fixed LASSO penalty (skips cross-validation)")
    solve.add_argument("--no-trace", action="store_true")
    solve.add_argument("--out", default=None, help="Result JSON path (stdout when omitted)")

    serve = commands.add_parser("serve", help="Start the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--reload", action="store_true")
    return parser


def load_experiment_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Spec file first, then flag overrides; the subcommand fixes the kind"""
    data: Dict[str, Any] = storage.read_json(args.spec) if args.spec else {}
    data["kind"] = EXPERIMENT_COMMANDS[args.command].value
    overrides = {
        "seed": args.seed,
        "output_dir": args.out,
        "trials": args.trials,
        "workers": args.workers,
        "solvers": getattr(args, "solvers", None),
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    if getattr(args, "eb_diagnostics", False):
        data["eb_diagnostics"] = True
    if getattr(args, "keep_spectra", False):
        data["keep_spectra"] = True
    return ExperimentSpec.model_validate(data)


def _run_experiment(args: argparse.Namespace) -> int:
    with validating_input():
        spec = load_experiment_spec(args)
    report = run_experiment(spec)
    for path in report.files:
        print(path)
    return EXIT_OK


def _run_expand(args: argparse.Namespace) -> int:
    with validating_input():
        design = expand_quadratic(storage.read_features(args.input))
        if args.normalize:
            design = normalize_columns(design)
    storage.write_matrix_csv(args.output, design.data)
    if args.norms:
        storage.write_vector_csv(args.norms, design.norms)
    logger.info("expanded %d x %d features into %d columns", design.m, design.layout.n_features, design.l)
    return EXIT_OK


def _run_solve(args: argparse.Namespace) -> int:
    with validating_input():
        dataset = storage.load_dataset(args.dataset)
        design, test_design = prepare_designs(dataset)

        amp_updates = {"damping": args.damping, "max_iters": args.max_iters, "variant": args.variant}
        amp = AmpConfig(**{key: value for key, value in amp_updates.items() if value is not None})
        priors = storage.load_priors(args.priors) if args.priors else GroupPriorSet()
        lasso = LassoConfig()
        if args.lam is not None:
            lasso = LassoConfig(lambdas=(args.lam,) * 4)

    outcome = run_solver(
        SolverName(args.solver), design, dataset.y_train, (test_design, dataset.y_test),
        truth=dataset.truth, priors=priors, amp=amp, lasso=lasso,
        cross_validate=args.lam is None,
    )
    payload = outcome.row()
    if outcome.result is not None:
        payload.update(storage.solver_result_to_dict(outcome.result, include_trace=not args.no_trace))

    if args.out:
        storage.write_json(args.out, payload)
    else:
        sys.stdout.write(storage.dumps_json(payload))
    return EXIT_OK


def _run_generate(args: argparse.Namespace) -> int:
    with validating_input():
        data: Dict[str, Any] = storage.read_json(args.spec) if args.spec else {}
        overrides = {"n": args.n, "m": args.m, "noise_var": args.noise_var, "seed": args.seed}
        data.update({key: value for key, value in overrides.items() if value is not None})
        spec = DATASET_MODELS[args.model].model_validate(data)
        k_test = args.k_test if args.k_test is not None else max(1, spec.m // 10)
        if isinstance(spec, BayesModelSpec):
            dataset = gen_bayes_dataset(spec, k_test)
        else:
            dataset = gen_sinusoid_dataset(spec, k_test)

    record = {"model": args.model, "k_test": k_test, **spec.model_dump(mode="json")}
    directory = storage.save_dataset(args.output, dataset, spec=record)
    if isinstance(spec, BayesModelSpec):
        storage.save_priors(directory / "priors.json", spec.priors)
    print(directory)
    return EXIT_OK


def _run_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, reload=args.reload or settings.DEBUG)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    handlers = {"expand": _run_expand, "generate": _run_generate, "solve": _run_solve, "serve": _run_serve}
    handler = handlers.get(args.command, _run_experiment)
    try:
        return handler(args)
    except InvalidInputError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
