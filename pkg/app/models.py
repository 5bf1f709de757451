"""
Array-backed domain models shared by the kernel, solvers and harness
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple
import enum

import numpy as np

from app.exceptions import GroupMismatchError, KernelExpansionError
from app.schemas import BgPrior


class ColumnGroup(str, enum.Enum):
    """Coefficient groups of the quadratic expansion"""
    DC = "dc"
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    CROSS = "cross"


GROUP_ORDER = (ColumnGroup.DC, ColumnGroup.LINEAR, ColumnGroup.QUADRATIC, ColumnGroup.CROSS)


@dataclass(frozen=True)
class ColumnLayout:
    """
    Column-group map of a quadratic expansion over `n_features` raw features

    Columns are ordered [DC | linear(0..N-1) | quadratic(0..N-1) | cross],
    cross pairs (n1, n2) with n1 < n2 in lexicographic order.
    n_features=0 describes a DC-only layout.
    """
    n_features: int

    def __post_init__(self):
        if self.n_features < 0:
            raise KernelExpansionError(f"n_features must be >= 0, got {self.n_features}")

    @property
    def l(self) -> int:
        n = self.n_features
        return 1 + 2 * n + n * (n - 1) // 2

    @property
    def n_cross(self) -> int:
        return self.n_features * (self.n_features - 1) // 2

    @cached_property
    def slices(self) -> Dict[ColumnGroup, slice]:
        n = self.n_features
        return {
            ColumnGroup.DC: slice(0, 1),
            ColumnGroup.LINEAR: slice(1, 1 + n),
            ColumnGroup.QUADRATIC: slice(1 + n, 1 + 2 * n),
            ColumnGroup.CROSS: slice(1 + 2 * n, self.l),
        }

    @cached_property
    def cross_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(self.n_features, k=1)

    @cached_property
    def group_ids(self) -> np.ndarray:
        """Integer group index (position in GROUP_ORDER) for every column"""
        ids = np.empty(self.l, dtype=np.int8)
        for index, group in enumerate(GROUP_ORDER):
            ids[self.slices[group]] = index
        return ids

    @property
    def group_sizes(self) -> List[int]:
        n = self.n_features
        return [1, n, n, self.n_cross]

    def group_of(self, column: int) -> ColumnGroup:
        return GROUP_ORDER[int(self.group_ids[column])]

    def label(self, column: int) -> str:
        """Readable label such as `quadratic(3)` or `cross(0,4)`"""
        if not 0 <= column < self.l:
            raise GroupMismatchError(f"Column {column} outside layout of width {self.l}")
        group = self.group_of(column)
        offset = column - self.slices[group].start
        if group is ColumnGroup.DC:
            return "dc"
        if group is ColumnGroup.CROSS:
            first, second = self.cross_pairs
            return f"cross({first[offset]},{second[offset]})"
        return f"{group.value}({offset})"

    def labels(self) -> List[str]:
        return [self.label(column) for column in range(self.l)]


@dataclass(frozen=True)
class FeatureMatrix:
    """Raw feature matrix, rows are samples and columns are features"""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise KernelExpansionError(f"Feature matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise KernelExpansionError(f"Feature matrix needs M >= 1 and N >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise KernelExpansionError("Feature matrix contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def rows(self, index) -> "FeatureMatrix":
        return FeatureMatrix(self.data[index])


@dataclass(frozen=True)
class ExpandedDesign:
    """M x L quadratic-kernel design with its column metadata"""
    data: np.ndarray
    layout: ColumnLayout
    norms: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        norms = np.asarray(self.norms, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != self.layout.l:
            raise GroupMismatchError(
                f"Design shape {data.shape} does not match layout width {self.layout.l}"
            )
        if norms.shape != (self.layout.l,):
            raise GroupMismatchError(f"Expected {self.layout.l} column norms, got {norms.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "norms", norms)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def l(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GroupedCoefficients:
    """Coefficient vector split into the DC, linear, quadratic and cross groups"""
    dc: float
    linear: np.ndarray
    quadratic: np.ndarray
    cross: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        linear = np.asarray(self.linear, dtype=np.float64).reshape(-1)
        quadratic = np.asarray(self.quadratic, dtype=np.float64).reshape(-1)
        cross = np.asarray(self.cross, dtype=np.float64).reshape(-1)
        n = linear.size
        if quadratic.size != n or cross.size != n * (n - 1) // 2:
            raise GroupMismatchError(
                f"Inconsistent group sizes: linear={n}, quadratic={quadratic.size}, cross={cross.size}"
            )
        object.__setattr__(self, "dc", float(self.dc))
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "quadratic", quadratic)
        object.__setattr__(self, "cross", cross)

    @property
    def layout(self) -> ColumnLayout:
        return ColumnLayout(self.linear.size)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.dc], self.linear, self.quadratic, self.cross))

    @classmethod
    def from_vector(cls, vector: np.ndarray, layout: ColumnLayout, normalized: bool = False) -> "GroupedCoefficients":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (layout.l,):
            raise GroupMismatchError(f"Expected {layout.l} coefficients, got shape {vector.shape}")
        s = layout.slices
        return cls(
            dc=vector[0],
            linear=vector[s[ColumnGroup.LINEAR]].copy(),
            quadratic=vector[s[ColumnGroup.QUADRATIC]].copy(),
            cross=vector[s[ColumnGroup.CROSS]].copy(),
            normalized=normalized,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "normalized": self.normalized,
            "dc": self.dc,
            "linear": self.linear.tolist(),
            "quadratic": self.quadratic.tolist(),
            "cross": self.cross.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "GroupedCoefficients":
        return cls(
            dc=payload["dc"],
            linear=payload["linear"],
            quadratic=payload["quadratic"],
            cross=payload["cross"],
            normalized=payload.get("normalized", False),
        )


@dataclass(frozen=True)
class TraceRecord:
    """One row of a solver's per-iteration diagnostics"""
    iteration: int
    residual_norm: float
    sigma2_eff: Optional[float] = None
    coeff_mse: Optional[float] = None
    test_mse: Optional[float] = None
    objective: Optional[float] = None


@dataclass
class AmpState:
    """Iterate t of AMP: estimate, Onsager residual and effective channel noise"""
    theta: np.ndarray
    residual: np.ndarray
    sigma2_eff: float
    iteration: int = 0
    trace: List[TraceRecord] = field(default_factory=list)
    mean_derivative: float = 0.0
    # pseudo-data q^t of the last step and the channel variance it was denoised at
    pseudo_data: Optional[np.ndarray] = None
    channel_sigma2: Optional[float] = None


@dataclass
class SolverResult:
    """Final estimate of any solver plus convergence diagnostics"""
    solver: str
    theta_hat_normalized: np.ndarray
    theta_hat_original: GroupedCoefficients
    iterations_used: int
    converged: bool
    trace: List[TraceRecord] = field(default_factory=list)
    diverged: bool = False
    elapsed_seconds: float = 0.0
    final_state: Optional[AmpState] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    """Train/test split of a synthetic regression problem"""
    x_train: FeatureMatrix
    y_train: np.ndarray
    x_test: FeatureMatrix
    y_test: np.ndarray
    truth: Optional[GroupedCoefficients] = None

    @property
    def k(self) -> int:
        return self.x_test.m


@dataclass(frozen=True)
class CvResult:
    """Cross-validation curve over an equalized lambda grid"""
    best_lambda: float
    lambdas: np.ndarray
    mean_mse: np.ndarray
    std_mse: np.ndarray


@dataclass(frozen=True)
class EmFit:
    """Bernoulli-Gaussian prior after EM plus the log-likelihood trajectory"""
    prior: BgPrior
    log_likelihoods: List[float]
