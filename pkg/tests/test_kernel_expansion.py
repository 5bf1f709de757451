"""
Tests for app/services/kernel_expansion.py and the ColumnLayout model
"""
import numpy as np
import pytest

from app.exceptions import DegenerateColumnError, GroupMismatchError, KernelExpansionError, ScaleMismatchError
from app.models import ColumnGroup, ColumnLayout, FeatureMatrix, GroupedCoefficients
from app.services.kernel_expansion import (
    column_count,
    expand_quadratic,
    normalize_columns,
    predict,
    rescale_coefficients_to_normalized,
    rescale_coefficients_to_original,
)
from app.services.synthetic_data import gen_features


class TestColumnCount:

    @pytest.mark.parametrize("n, expected", [(1, 3), (2, 6), (10, 66), (30, 496), (100, 5151)])
    def test_values(self, n, expected):
        assert column_count(n) == expected

    def test_zero_features_rejected(self):
        with pytest.raises(KernelExpansionError):
            column_count(0)

    def test_dc_only_layout(self):
        """A layout with no features still has the DC column"""
        layout = ColumnLayout(0)
        assert layout.l == 1
        assert layout.labels() == ["dc"]


class TestColumnLayout:

    def test_labels_are_ordered_by_group(self):
        assert ColumnLayout(3).labels() == [
            "dc",
            "linear(0)", "linear(1)", "linear(2)",
            "quadratic(0)", "quadratic(1)", "quadratic(2)",
            "cross(0,1)", "cross(0,2)", "cross(1,2)",
        ]

    def test_group_sizes_sum_to_width(self):
        layout = ColumnLayout(7)
        assert sum(layout.group_sizes) == layout.l
        assert layout.group_of(0) is ColumnGroup.DC
        assert layout.group_of(layout.l - 1) is ColumnGroup.CROSS

    def test_label_out_of_range(self):
        with pytest.raises(GroupMismatchError):
            ColumnLayout(2).label(6)


class TestExpandQuadratic:

    def test_single_row(self):
        design = expand_quadratic(FeatureMatrix(np.array([[1.0, 2.0, 3.0]])))
        np.testing.assert_array_equal(design.data[0], [1, 1, 2, 3, 1, 4, 9, 2, 3, 6])
        assert not design.normalized
        np.testing.assert_array_equal(design.norms, np.ones(10))

    def test_shape(self):
        design = expand_quadratic(gen_features(15, 5, seed=0))
        assert design.data.shape == (15, 21)
        assert design.layout.n_features == 5

    def test_squared_columns_are_nonnegative(self):
        design = expand_quadratic(gen_features(50, 4, seed=6))
        assert np.all(design.data[:, design.layout.slices[ColumnGroup.QUADRATIC]] >= 0.0)

    def test_predict_matches_polynomial(self, rng):
        """theta_0 + sum_i theta_i x_i + sum_i theta_ii x_i^2 + sum_{i<j} theta_ij x_i x_j"""
        features = gen_features(12, 4, seed=8)
        design = expand_quadratic(features)
        theta = GroupedCoefficients.from_vector(rng.standard_normal(design.l), design.layout)
        expected = []
        for x in features.data:
            value = theta.dc
            cross = iter(theta.cross)
            for i in range(4):
                value += theta.linear[i] * x[i] + theta.quadratic[i] * x[i] ** 2
                for j in range(i + 1, 4):
                    value += next(cross) * x[i] * x[j]
            expected.append(value)
        np.testing.assert_allclose(predict(design, theta), expected, rtol=1e-12, atol=1e-12)

    def test_non_finite_features_rejected(self):
        with pytest.raises(KernelExpansionError):
            FeatureMatrix(np.array([[1.0, np.nan]]))


class TestNormalizeColumns:

    def test_unit_columns_and_stored_norms(self):
        raw = expand_quadratic(gen_features(30, 4, seed=1))
        design = normalize_columns(raw)
        np.testing.assert_allclose(np.linalg.norm(design.data, axis=0), 1.0, rtol=1e-12)
        np.testing.assert_allclose(design.norms, np.linalg.norm(raw.data, axis=0))
        assert design.norms[0] == pytest.approx(np.sqrt(30))
        assert np.sum(design.data ** 2) == pytest.approx(design.l)

    def test_zero_column_names_the_offender(self):
        x = gen_features(10, 3, seed=2).data.copy()
        x[:, 1] = 0.0
        with pytest.raises(DegenerateColumnError, match=r"linear\(1\)"):
            normalize_columns(expand_quadratic(FeatureMatrix(x)))

    def test_renormalizing_keeps_norms(self):
        design = normalize_columns(expand_quadratic(gen_features(25, 3, seed=4)))
        again = normalize_columns(design)
        np.testing.assert_allclose(again.norms, design.norms, rtol=1e-12)


class TestRescaling:

    def test_normalized_prediction_matches_original(self, rng):
        """X' theta' equals X theta when theta' = theta * norms"""
        raw = expand_quadratic(gen_features(40, 5, seed=3))
        design = normalize_columns(raw)
        theta = GroupedCoefficients.from_vector(rng.standard_normal(raw.l), raw.layout)
        theta_prime = rescale_coefficients_to_normalized(theta, design.norms)
        np.testing.assert_allclose(predict(design, theta_prime), predict(raw, theta), rtol=1e-10, atol=1e-10)
        back = rescale_coefficients_to_original(theta_prime, design.norms)
        np.testing.assert_allclose(back.to_vector(), theta.to_vector(), rtol=1e-12)

    def test_scale_mismatch(self, rng):
        raw = expand_quadratic(gen_features(10, 2, seed=3))
        theta = GroupedCoefficients.from_vector(rng.standard_normal(raw.l), raw.layout, normalized=True)
        with pytest.raises(ScaleMismatchError):
            predict(raw, theta)

    def test_norm_length_mismatch(self):
        theta = GroupedCoefficients.from_vector(np.ones(6), ColumnLayout(2))
        with pytest.raises(GroupMismatchError):
            rescale_coefficients_to_normalized(theta, np.ones(5))
