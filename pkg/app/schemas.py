"""
Pydantic schemas for priors, solver configuration, experiment specs and the HTTP API
"""
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Any, Dict, List, Optional, Tuple
from enum import Enum

from app.config import settings


# Enums
class AmpVariant(str, Enum):
    SIMULTANEOUS = "simultaneous"
    SWEEP = "sweep"


class PriorScale(str, Enum):
    ORIGINAL = "original"
    NORMALIZED = "normalized"


class SolverName(str, Enum):
    AMP = "amp"
    EB_AMP = "eb_amp"
    LASSO = "lasso"
    PSEUDOINVERSE = "pseudoinverse"


class ExperimentKind(str, Enum):
    BAYES = "bayes"
    EMPIRICAL_BAYES = "empirical_bayes"
    SPECTRUM = "spectrum"


# (M, N) rows of the singular-value table
SPECTRUM_SHAPES: List[Tuple[int, int]] = [
    (1000, 10), (1500, 15), (2000, 20), (3000, 20), (3000, 30),
    (4000, 40), (4500, 50), (5000, 60), (5500, 70), (5000, 80),
    (6000, 80), (8000, 80), (8000, 90), (6000, 100), (8000, 100),
]

SINUSOID_RATES: List[float] = [0.14, 0.28, 0.56]


# Priors
class BgPrior(BaseModel):
    """Bernoulli-Gaussian prior (1-p)*delta_0 + p*N(0, tau)"""
    model_config = ConfigDict(frozen=True)

    p: float = Field(..., ge=0.0, le=1.0)
    tau: float = Field(..., gt=0.0)


class GaussianPrior(BaseModel):
    """Zero-mean Gaussian prior N(0, tau)"""
    model_config = ConfigDict(frozen=True)

    tau: float = Field(..., gt=0.0)


class GroupPriorSet(BaseModel):
    """
    One prior per coefficient group

    Defaults are the planted-model values: DC ~ N(0, 10), linear ~ BG(0.2, 1),
    quadratic ~ BG(0.2, 0.5), cross ~ BG(0.03, 0.1).
    """
    model_config = ConfigDict(frozen=True)

    dc: GaussianPrior = GaussianPrior(tau=10.0)
    linear: BgPrior = BgPrior(p=0.2, tau=1.0)
    quadratic: BgPrior = BgPrior(p=0.2, tau=0.5)
    cross: BgPrior = BgPrior(p=0.03, tau=0.1)


def _default_eb_init() -> GroupPriorSet:
    start = BgPrior(p=0.1, tau=1.0)
    return GroupPriorSet(dc=GaussianPrior(tau=1.0), linear=start, quadratic=start, cross=start)


# Solver configuration
class AmpConfig(BaseModel):
    """Iteration control for the AMP solvers"""
    max_iters: int = Field(default_factory=lambda: settings.AMP_MAX_ITERS, ge=1)
    damping: float = Field(default_factory=lambda: settings.AMP_DAMPING, gt=0.0, le=1.0)
    tol: float = Field(default_factory=lambda: settings.AMP_TOL, gt=0.0)
    variant: AmpVariant = Field(default_factory=lambda: AmpVariant(settings.AMP_VARIANT))
    seed: int = 0
    # unit of the priors handed to amp_run
    priors_scale: PriorScale = PriorScale.ORIGINAL


class EbConfig(BaseModel):
    """Empirical-Bayes EM settings"""
    em_steps_per_amp_iter: int = Field(default_factory=lambda: settings.EB_EM_STEPS, ge=0)
    p_bounds: Tuple[float, float] = (1e-4, 1.0)
    tau_bounds: Tuple[float, float] = (1e-8, 1e4)
    init: GroupPriorSet = Field(default_factory=_default_eb_init)

    @field_validator("p_bounds")
    @classmethod
    def check_p_bounds(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0.0 < low <= high <= 1.0:
            raise ValueError(f"p_bounds must satisfy 0 < low <= high <= 1, got {value}")
        return value

    @field_validator("tau_bounds")
    @classmethod
    def check_tau_bounds(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0.0 < low <= high:
            raise ValueError(f"tau_bounds must satisfy 0 < low <= high, got {value}")
        return value


class LassoConfig(BaseModel):
    """Group-penalized LASSO settings"""
    lambdas: Tuple[float, float, float, float] = (0.1, 0.1, 0.1, 0.1)
    max_iters: int = Field(default_factory=lambda: settings.LASSO_MAX_ITERS, ge=1)
    tol: float = Field(default_factory=lambda: settings.LASSO_TOL, gt=0.0)
    equalize: bool = True
    exempt_dc: bool = False

    @field_validator("lambdas")
    @classmethod
    def check_lambdas(cls, value: Tuple[float, float, float, float]) -> Tuple[float, float, float, float]:
        if any(lam < 0 for lam in value):
            raise ValueError(f"lambdas must be nonnegative, got {value}")
        return value

    def group_lambdas(self) -> Tuple[float, float, float, float]:
        """Effective (DC, linear, quadratic, cross) penalties"""
        lambdas = (self.lambdas[0],) * 4 if self.equalize else tuple(self.lambdas)
        if self.exempt_dc:
            lambdas = (0.0,) + tuple(lambdas[1:])
        return lambdas

    def with_lambda(self, value: float) -> "LassoConfig":
        return self.model_copy(update={"lambdas": (value,) * 4, "equalize": True})


class CvConfig(BaseModel):
    """K-fold cross-validation over an equalized lambda grid"""
    folds: int = Field(default_factory=lambda: settings.CV_FOLDS, ge=2)
    grid_size: int = Field(default_factory=lambda: settings.CV_GRID_SIZE, ge=1)
    # grid spans [low, high] * max|X^T y| on a log scale unless `grid` is given
    grid_span: Tuple[float, float] = (1e-4, 1.0)
    grid: Optional[List[float]] = None
    seed: int = 0
    # stopping rule of the per-fold fits
    tol: float = Field(default_factory=lambda: settings.CV_TOL, gt=0.0)
    max_iters: int = Field(default_factory=lambda: settings.CV_MAX_ITERS, ge=1)


# Synthetic data
class BayesModelSpec(BaseModel):
    """Planted Bayesian model y = X_Q theta + z"""
    n: int = Field(..., ge=1)
    m: int = Field(..., ge=2)
    noise_var: float = Field(0.004, gt=0.0)
    priors: GroupPriorSet = GroupPriorSet()
    seed: int = 0


class SinusoidSpec(BaseModel):
    """Sum-of-sinusoids target y = sum_i w_i sin(X rho_i + phi_i) + z"""
    weights: Tuple[float, float, float] = (0.1, 0.3, 0.6)
    rho_prior: Optional[BgPrior] = None
    n: int = Field(..., ge=1)
    m: int = Field(..., ge=2)
    noise_var: float = Field(1e-4, gt=0.0)
    seed: int = 0
    shared_phase: bool = False

    def resolved_rho_prior(self) -> BgPrior:
        """Default BG(0.05, 1/(0.05 N)) keeps var(X rho) near one"""
        if self.rho_prior is not None:
            return self.rho_prior
        p = 0.05
        return BgPrior(p=p, tau=1.0 / (p * self.n))


# Experiments
class ExperimentSpec(BaseModel):
    """File-driven experiment description; every report embeds the resolved copy"""
    kind: ExperimentKind
    n_features: int = Field(30, ge=1)
    m: int = Field(580, ge=2)
    k_test: int = Field(60, ge=1)
    rates: List[float] = Field(default_factory=lambda: list(SINUSOID_RATES))
    shapes: List[Tuple[int, int]] = Field(default_factory=lambda: list(SPECTRUM_SHAPES))
    seed: int = 0
    trials: Optional[int] = Field(None, ge=1)
    solvers: Optional[List[SolverName]] = None
    noise_var: Optional[float] = Field(None, gt=0.0)
    priors: GroupPriorSet = GroupPriorSet()
    weights: Tuple[float, float, float] = (0.1, 0.3, 0.6)
    rho_prior: Optional[BgPrior] = None
    shared_phase: bool = False
    amp: AmpConfig = Field(default_factory=AmpConfig)
    eb: EbConfig = Field(default_factory=EbConfig)
    lasso: LassoConfig = Field(default_factory=LassoConfig)
    cv: CvConfig = Field(default_factory=CvConfig)
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    keep_spectra: bool = False
    eb_diagnostics: bool = False
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)

    @model_validator(mode="after")
    def resolve_defaults(self) -> "ExperimentSpec":
        if self.trials is None:
            if self.kind is ExperimentKind.BAYES:
                self.trials = 5
            elif self.kind is ExperimentKind.SPECTRUM:
                self.trials = settings.SPECTRUM_TRIALS
            else:
                self.trials = 20
        if self.solvers is None:
            if self.kind is ExperimentKind.BAYES:
                self.solvers = [SolverName.AMP, SolverName.LASSO]
            elif self.kind is ExperimentKind.EMPIRICAL_BAYES:
                self.solvers = [SolverName.EB_AMP, SolverName.LASSO, SolverName.PSEUDOINVERSE]
            else:
                self.solvers = []
        if self.kind is not ExperimentKind.SPECTRUM and not self.solvers:
            raise ValueError("at least one solver is required for estimation experiments")
        if self.noise_var is None:
            self.noise_var = 0.004 if self.kind is ExperimentKind.BAYES else 1e-4
        if self.kind is ExperimentKind.BAYES and self.k_test >= self.m:
            raise ValueError(f"k_test ({self.k_test}) must be smaller than m ({self.m})")
        if self.kind is ExperimentKind.SPECTRUM and not self.shapes:
            raise ValueError("spectrum experiments need at least one (M, N) shape")
        if any(rate <= 0 for rate in self.rates):
            raise ValueError(f"measurement rates must be positive, got {self.rates}")
        return self


class SpectrumReport(BaseModel):
    """Averaged top singular values of normalized quadratic designs"""
    m: int
    n: int
    l: int
    sigma1_sq_empirical: float
    sigma1_sq_predicted: float
    sigma2_sq_mean: float
    trials: int = Field(..., ge=1)
    all_svs: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_ordering(self) -> "SpectrumReport":
        if not self.sigma1_sq_empirical >= self.sigma2_sq_mean >= 0.0:
            raise ValueError("expected sigma1^2 >= sigma2^2 >= 0")
        return self


# Request Schemas
class ExpandRequest(BaseModel):
    """Raw feature rows to expand"""
    features: List[List[float]] = Field(..., min_length=1)
    normalize: bool = False


class EmpiricalSpectrumRequest(BaseModel):
    """Raw feature rows whose normalized expansion is analysed"""
    features: List[List[float]] = Field(..., min_length=1)


class SolveRequest(BaseModel):
    """Training data plus solver selection"""
    features: List[List[float]] = Field(..., min_length=1)
    targets: List[float] = Field(..., min_length=1)
    solver: SolverName = SolverName.AMP
    priors: GroupPriorSet = GroupPriorSet()
    amp: AmpConfig = Field(default_factory=AmpConfig)
    eb: EbConfig = Field(default_factory=EbConfig)
    lasso: LassoConfig = Field(default_factory=LassoConfig)
    cross_validate: bool = False
    cv: CvConfig = Field(default_factory=CvConfig)


# Response Schemas
class ColumnCountResponse(BaseModel):
    n: int
    l: int


class ExpandResponse(BaseModel):
    rows: int
    columns: int
    normalized: bool
    labels: List[str]
    norms: List[float]
    data: List[List[float]]


class SpectrumPredictionResponse(BaseModel):
    m: int
    n: int
    l: int
    sigma1_sq_pred: float


class EmpiricalSpectrumResponse(BaseModel):
    m: int
    n: int
    l: int
    singular_values: List[float]
    sigma1_sq_empirical: float
    sigma1_sq_pred: float


class SolveResponse(BaseModel):
    """Solver output in original coefficient units"""
    success: bool
    solver: SolverName
    coefficients: Dict[str, Any]
    iterations_used: int
    converged: bool
    diverged: bool
    lambda_used: Optional[float] = None
