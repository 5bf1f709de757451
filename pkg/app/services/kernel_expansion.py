"""
Quadratic polynomial kernel expansion and column normalization
"""
import logging

import numpy as np

from app.exceptions import DegenerateColumnError, GroupMismatchError, KernelExpansionError, ScaleMismatchError
from app.models import ColumnGroup, ColumnLayout, ExpandedDesign, FeatureMatrix, GroupedCoefficients


logger = logging.getLogger(__name__)


def column_count(n: int) -> int:
    """
    Number of columns of the quadratic expansion of `n` features

    Args:
        n: Raw feature count (>= 1)

    Returns:
        L = 1 + 2n + n(n-1)/2
    """
    if n < 1:
        raise KernelExpansionError(f"Feature count must be >= 1, got {n}")
    return ColumnLayout(n).l


def expand_quadratic(x: FeatureMatrix) -> ExpandedDesign:
    """
    Build [1 | x | x^2 | x_n1 x_n2 (n1 < n2)] row by row

    Args:
        x: Raw feature matrix (M x N)

    Returns:
        Unnormalized ExpandedDesign with M x L data
    """
    layout = ColumnLayout(x.n)
    s = layout.slices
    first, second = layout.cross_pairs

    data = np.empty((x.m, layout.l), dtype=np.float64)
    data[:, s[ColumnGroup.DC]] = 1.0
    data[:, s[ColumnGroup.LINEAR]] = x.data
    data[:, s[ColumnGroup.QUADRATIC]] = x.data ** 2
    data[:, s[ColumnGroup.CROSS]] = x.data[:, first] * x.data[:, second]

    return ExpandedDesign(
        data=data,
        layout=layout,
        norms=np.ones(layout.l),
        normalized=False,
    )


def normalize_columns(design: ExpandedDesign) -> ExpandedDesign:
    """
    Scale every column to unit 2-norm

    The returned `norms` are the original column norms; normalizing an already
    normalized design multiplies the stored norms by ~1.

    Raises:
        DegenerateColumnError: If a column has zero norm
    """
    norms = np.linalg.norm(design.data, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        column = int(zero[0])
        raise DegenerateColumnError(column, design.layout.label(column))

    stored = norms * design.norms if design.normalized else norms
    return ExpandedDesign(
        data=design.data / norms,
        layout=design.layout,
        norms=stored,
        normalized=True,
    )


def _check_norms(theta: GroupedCoefficients, norms: np.ndarray) -> np.ndarray:
    norms = np.asarray(norms, dtype=np.float64)
    if norms.shape != (theta.layout.l,):
        raise GroupMismatchError(f"Expected {theta.layout.l} norms, got shape {norms.shape}")
    return norms


def rescale_coefficients_to_normalized(theta: GroupedCoefficients, norms: np.ndarray) -> GroupedCoefficients:
    """theta'_l = theta_l * ||[X_Q]_l||"""
    norms = _check_norms(theta, norms)
    return GroupedCoefficients.from_vector(theta.to_vector() * norms, theta.layout, normalized=True)


def rescale_coefficients_to_original(theta_prime: GroupedCoefficients, norms: np.ndarray) -> GroupedCoefficients:
    """theta_l = theta'_l / ||[X_Q]_l||"""
    norms = _check_norms(theta_prime, norms)
    if np.any(norms <= 0.0):
        raise KernelExpansionError("Column norms must be positive to denormalize coefficients")
    return GroupedCoefficients.from_vector(theta_prime.to_vector() / norms, theta_prime.layout, normalized=False)


def predict(design: ExpandedDesign, theta: GroupedCoefficients) -> np.ndarray:
    """
    Noiseless response X theta

    Raises:
        ScaleMismatchError: If theta's scale differs from the design's
        GroupMismatchError: If dimensions disagree
    """
    if theta.normalized != design.normalized:
        raise ScaleMismatchError(
            f"Coefficients are {'normalized' if theta.normalized else 'original'}-scale "
            f"but design is {'normalized' if design.normalized else 'unnormalized'}"
        )
    if theta.layout.l != design.l:
        raise GroupMismatchError(f"Coefficient length {theta.layout.l} != design width {design.l}")
    return design.data @ theta.to_vector()
