"""
Singular-value analysis of the normalized quadratic design
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg

from app.exceptions import KernelExpansionError, SolverInputError
from app.models import ExpandedDesign
from app.schemas import SpectrumReport
from app.services.kernel_expansion import column_count, expand_quadratic, normalize_columns
from app.services.synthetic_data import gen_features


logger = logging.getLogger(__name__)


def predict_sigma1_sq(m: int, n: int) -> float:
    """
    Predicted squared top singular value: 1 + N/3 + N(N+1)/(2M)

    The unit-norm DC column and the N quadratic columns share a large common
    mean component; the prediction is the energy of that component and acts as
    a lower bound for the empirical value.
    """
    if m < 1 or n < 1:
        raise KernelExpansionError(f"Need m >= 1 and n >= 1, got m={m}, n={n}")
    return 1.0 + n / 3.0 + n * (n + 1) / (2.0 * m)


def empirical_spectrum(design: ExpandedDesign) -> np.ndarray:
    """All min(M, L) singular values of a normalized design, descending"""
    if not design.normalized:
        raise SolverInputError("Spectral analysis expects a column-normalized design")
    if not np.all(np.isfinite(design.data)):
        raise SolverInputError("Design contains non-finite entries")
    return scipy.linalg.svdvals(design.data)


def trial_seed(seed: int, row: int, trial: int) -> np.random.SeedSequence:
    """Seed of trial `trial` for table row `row`: SeedSequence([seed, row, trial])"""
    return np.random.SeedSequence([seed, row, trial])


def _run_trial(args: Tuple[int, int, int, int, int]) -> np.ndarray:
    m, n, seed, row, trial = args
    design = normalize_columns(expand_quadratic(gen_features(m, n, trial_seed(seed, row, trial))))
    return empirical_spectrum(design)


def spectrum_table(
    rows: Sequence[Tuple[int, int]],
    trials: int,
    seed: int,
    keep_spectra: bool = False,
    workers: int = 1,
) -> List[SpectrumReport]:
    """
    Average sigma_1^2 and sigma_2^2 over `trials` i.i.d. Gaussian feature matrices per (M, N)

    Args:
        rows: (M, N) pairs
        trials: Matrices per pair
        seed: Master seed
        keep_spectra: Attach every trial's full spectrum to the report
        workers: Thread count for the trials

    Returns:
        One SpectrumReport per row, in input order
    """
    if trials < 1:
        raise SolverInputError(f"trials must be >= 1, got {trials}")

    reports = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for row, (m, n) in enumerate(rows):
            jobs = [(m, n, seed, row, trial) for trial in range(trials)]
            spectra = list(pool.map(_run_trial, jobs))
            top = np.array([s[0] ** 2 for s in spectra])
            second = np.array([s[1] ** 2 if s.size > 1 else 0.0 for s in spectra])
            report = SpectrumReport(
                m=m,
                n=n,
                l=column_count(n),
                sigma1_sq_empirical=float(np.mean(top)),
                sigma1_sq_predicted=predict_sigma1_sq(m, n),
                sigma2_sq_mean=float(np.mean(second)),
                trials=trials,
                all_svs=[s.tolist() for s in spectra] if keep_spectra else None,
            )
            logger.info(
                "spectrum M=%d N=%d: sigma1^2=%.3f predicted=%.3f",
                m, n, report.sigma1_sq_empirical, report.sigma1_sq_predicted,
            )
            reports.append(report)
    return reports
