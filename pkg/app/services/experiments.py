"""
Experiment harness: seeded trials of generators and solvers, written out as
CSV traces, summary JSON and the singular-value / test-MSE tables
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app import storage
from app.exceptions import DivergenceError
from app.models import Dataset, ExpandedDesign, GroupedCoefficients, SolverResult
from app.schemas import (
    AmpConfig,
    BayesModelSpec,
    CvConfig,
    EbConfig,
    ExperimentKind,
    ExperimentSpec,
    GroupPriorSet,
    LassoConfig,
    SinusoidSpec,
    SolverName,
)
from app.services.amp_solver import amp_run
from app.services.baselines import cross_validate_lambda, lasso_cd, pseudoinverse_solve
from app.services.empirical_bayes import eb_amp_run
from app.services.kernel_expansion import column_count, expand_quadratic, normalize_columns
from app.services.spectral_analysis import spectrum_table
from app.services.synthetic_data import gen_bayes_dataset, gen_sinusoid_dataset, test_mse


logger = logging.getLogger(__name__)

SPECTRUM_COLUMNS = ["M", "N", "L", "sigma1_sq_empirical", "sigma1_sq_pred"]


@dataclass
class ExperimentReport:
    """Where an experiment wrote its files, plus the summary it serialized"""
    output_dir: Path
    files: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SolverOutcome:
    """One solver on one dataset"""
    solver: SolverName
    result: Optional[SolverResult]
    test_mse: Optional[float]
    coeff_mse: Optional[float]
    lambda_used: Optional[float] = None
    cv: Any = None
    error: Optional[str] = None

    @property
    def diverged(self) -> bool:
        return self.error is not None or (self.result is not None and self.result.diverged)

    def row(self) -> Dict[str, Any]:
        return {
            "solver": self.solver.value,
            "coeff_mse": self.coeff_mse,
            "test_mse": self.test_mse,
            "iterations_used": None if self.result is None else self.result.iterations_used,
            "converged": False if self.result is None else self.result.converged,
            "diverged": self.diverged,
            "lambda": self.lambda_used,
            "error": self.error,
        }


def derive_seed(*parts: int) -> int:
    """Sub-seed for a (master seed, index, ...) tuple via SeedSequence"""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def prepare_designs(dataset: Dataset) -> Tuple[ExpandedDesign, ExpandedDesign]:
    """Normalized training design and unnormalized held-out design"""
    return normalize_columns(expand_quadratic(dataset.x_train)), expand_quadratic(dataset.x_test)


def run_solver(
    solver: SolverName,
    design: ExpandedDesign,
    y: np.ndarray,
    test: Optional[Tuple[ExpandedDesign, np.ndarray]] = None,
    truth: Optional[GroupedCoefficients] = None,
    priors: Optional[GroupPriorSet] = None,
    amp: Optional[AmpConfig] = None,
    eb: Optional[EbConfig] = None,
    lasso: Optional[LassoConfig] = None,
    cv: Optional[CvConfig] = None,
    cross_validate: bool = True,
) -> SolverOutcome:
    """Run one solver; divergence is captured on the outcome instead of raised"""
    priors = priors or GroupPriorSet()
    amp = amp or AmpConfig()
    eb = eb or EbConfig()
    lasso = lasso or LassoConfig()
    cv = cv or CvConfig()

    cv_result = None
    lambda_used = None
    try:
        if solver is SolverName.AMP:
            result = amp_run(design, y, priors, amp, truth=truth, test=test)
        elif solver is SolverName.EB_AMP:
            result = eb_amp_run(design, y, amp, eb, truth=truth, test=test)
        elif solver is SolverName.LASSO:
            if cross_validate:
                cv_result = cross_validate_lambda(design, y, lasso, cv)
                lasso = lasso.with_lambda(cv_result.best_lambda)
            lambda_used = lasso.group_lambdas()[1]
            result = lasso_cd(design, y, lasso, truth=truth, test=test)
        else:
            result = pseudoinverse_solve(design, y)
    except DivergenceError as error:
        logger.warning("%s diverged: %s", solver.value, error)
        return SolverOutcome(solver, None, None, None, lambda_used, cv_result, error=str(error))

    held_out = None if test is None else test_mse(test[0], result.theta_hat_original, test[1])
    coeff_mse = None
    if truth is not None:
        coeff_mse = float(np.mean((result.theta_hat_original.to_vector() - truth.to_vector()) ** 2))
    return SolverOutcome(
        solver=solver,
        result=result,
        test_mse=held_out,
        coeff_mse=coeff_mse,
        lambda_used=lambda_used,
        cv=cv_result,
    )


def _run_all(spec: ExperimentSpec, dataset: Dataset, with_truth: bool) -> List[SolverOutcome]:
    design, test_design = prepare_designs(dataset)
    test = (test_design, dataset.y_test)
    return [
        run_solver(
            solver, design, dataset.y_train, test,
            truth=dataset.truth if with_truth else None,
            priors=spec.priors, amp=spec.amp, eb=spec.eb, lasso=spec.lasso, cv=spec.cv,
        )
        for solver in spec.solvers
    ]


def _write_outcomes(out: Path, prefix: str, outcomes: List[SolverOutcome], spec: ExperimentSpec) -> List[Path]:
    files = []
    for outcome in outcomes:
        name = outcome.solver.value
        if outcome.result is not None:
            path = out / f"{prefix}_{name}_trace.csv"
            storage.write_trace_csv(path, outcome.result.trace)
            files.append(path)
            learned = outcome.result.diagnostics.get("learned_priors")
            if spec.eb_diagnostics and learned:
                path = out / f"{prefix}_{name}_priors.jsonl"
                path.unlink(missing_ok=True)
                storage.append_jsonl(path, learned)
                files.append(path)
        if outcome.cv is not None:
            path = out / f"{prefix}_{name}_cv.csv"
            storage.write_cv_curve_csv(path, outcome.cv)
            files.append(path)
    return files


def _aggregate(values: List[Optional[float]]) -> Dict[str, Optional[float]]:
    finite = [v for v in values if v is not None and np.isfinite(v)]
    if not finite:
        return {"median": None, "mean": None}
    return {"median": float(np.median(finite)), "mean": float(np.mean(finite))}


def _output_dir(spec: ExperimentSpec) -> Path:
    out = Path(spec.output_dir) / spec.kind.value
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_bayes_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """
    Planted Bayesian model: every trial draws a dataset, runs the selected
    solvers and records coefficient-MSE and test-MSE traces

    Writes trial_XXX_<solver>_trace.csv per trial and solver, CV curves for
    LASSO, and summary.json with per-solver median/mean final MSEs.
    """
    out = _output_dir(spec)
    logger.info("bayes experiment: N=%d M=%d K=%d trials=%d", spec.n_features, spec.m, spec.k_test, spec.trials)

    def trial(index: int) -> List[SolverOutcome]:
        model = BayesModelSpec(
            n=spec.n_features, m=spec.m, noise_var=spec.noise_var,
            priors=spec.priors, seed=derive_seed(spec.seed, index),
        )
        outcomes = _run_all(spec, gen_bayes_dataset(model, spec.k_test), with_truth=True)
        logger.info("bayes trial %d done", index)
        return outcomes

    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        results = list(pool.map(trial, range(spec.trials)))

    report = ExperimentReport(output_dir=out)
    trial_rows = []
    for index, outcomes in enumerate(results):
        report.files += _write_outcomes(out, f"trial_{index:03d}", outcomes, spec)
        trial_rows.append({"trial": index, "seed": derive_seed(spec.seed, index),
                           "solvers": [outcome.row() for outcome in outcomes]})

    solvers = {}
    for position, solver in enumerate(spec.solvers):
        outcomes = [trial_outcomes[position] for trial_outcomes in results]
        solvers[solver.value] = {
            "coeff_mse": _aggregate([o.coeff_mse for o in outcomes]),
            "test_mse": _aggregate([o.test_mse for o in outcomes]),
            "diverged_trials": sum(o.diverged for o in outcomes),
        }

    report.summary = {"spec": spec.model_dump(mode="json"), "solvers": solvers, "trials": trial_rows}
    summary_path = out / "summary.json"
    storage.write_json(summary_path, report.summary)
    report.files.append(summary_path)
    return report


def measurement_count(rate: float, n_features: int, folds: int) -> int:
    """Training rows for measurement rate R = M / L (at least one row per CV fold)"""
    return max(int(round(rate * column_count(n_features))), folds)


def run_eb_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """
    Sinusoid family at several measurement rates; the test-MSE median over
    `trials` realizations per (rate, solver) goes to test_mse_table.csv
    """
    out = _output_dir(spec)
    l = column_count(spec.n_features)
    report = ExperimentReport(output_dir=out)
    table_rows = []
    rate_summaries = []

    for rate_index, rate in enumerate(spec.rates):
        m_train = measurement_count(rate, spec.n_features, spec.cv.folds)
        logger.info("eb experiment: R=%.3f M=%d L=%d trials=%d", rate, m_train, l, spec.trials)

        def trial(index: int, rate_index=rate_index, m_train=m_train) -> List[SolverOutcome]:
            sinusoid = SinusoidSpec(
                weights=spec.weights, rho_prior=spec.rho_prior, n=spec.n_features,
                m=m_train + spec.k_test, noise_var=spec.noise_var,
                seed=derive_seed(spec.seed, rate_index, index), shared_phase=spec.shared_phase,
            )
            return _run_all(spec, gen_sinusoid_dataset(sinusoid, spec.k_test), with_truth=False)

        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(trial, range(spec.trials)))

        row = {"rate": rate, "M": m_train, "L": l}
        solvers = {}
        for position, solver in enumerate(spec.solvers):
            values = [trial_outcomes[position].test_mse for trial_outcomes in results]
            stats = _aggregate(values)
            row[solver.value] = stats["median"]
            solvers[solver.value] = {
                "test_mse": stats,
                "realizations": len(values),
                "diverged_trials": sum(t[position].diverged for t in results),
            }
        table_rows.append(row)
        rate_summaries.append({"rate": rate, "m": m_train, "solvers": solvers})

        for index, outcomes in enumerate(results):
            report.files += _write_outcomes(out, f"rate_{rate_index}_trial_{index:03d}", outcomes, spec)

    table_path = out / "test_mse_table.csv"
    storage.write_table_csv(table_path, table_rows, ["rate", "M", "L"] + [s.value for s in spec.solvers])
    report.summary = {"spec": spec.model_dump(mode="json"), "rates": rate_summaries}
    summary_path = out / "summary.json"
    storage.write_json(summary_path, report.summary)
    report.files += [table_path, summary_path]
    return report


def run_spectrum_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Singular-value table over spec.shapes, written as spectrum_table.csv"""
    out = _output_dir(spec)
    reports = spectrum_table(spec.shapes, spec.trials, spec.seed, spec.keep_spectra, spec.workers)

    rows = [
        {
            "M": r.m,
            "N": r.n,
            "L": r.l,
            "sigma1_sq_empirical": r.sigma1_sq_empirical,
            "sigma1_sq_pred": r.sigma1_sq_predicted,
        }
        for r in reports
    ]
    table_path = out / "spectrum_table.csv"
    storage.write_table_csv(table_path, rows, SPECTRUM_COLUMNS)

    summary = {"spec": spec.model_dump(mode="json"), "rows": [r.model_dump(mode="json") for r in reports]}
    summary_path = out / "summary.json"
    storage.write_json(summary_path, summary)
    return ExperimentReport(output_dir=out, files=[table_path, summary_path], summary=summary)


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    if spec.kind is ExperimentKind.BAYES:
        return run_bayes_experiment(spec)
    if spec.kind is ExperimentKind.EMPIRICAL_BAYES:
        return run_eb_experiment(spec)
    return run_spectrum_experiment(spec)
