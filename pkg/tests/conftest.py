"""Shared fixtures"""
import numpy as np
import pytest

from app.models import ColumnLayout, ExpandedDesign
from app.schemas import BayesModelSpec, GroupPriorSet, SinusoidSpec
from app.services.kernel_expansion import expand_quadratic, normalize_columns
from app.services.synthetic_data import gen_bayes_dataset, gen_features, gen_sinusoid_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_design():
    """Normalized 20 x 28 design from 6 Gaussian features"""
    return normalize_columns(expand_quadratic(gen_features(20, 6, seed=7)))


@pytest.fixture
def tall_design():
    """Normalized 120 x 28 design (overdetermined, full column rank)"""
    return normalize_columns(expand_quadratic(gen_features(120, 6, seed=11)))


@pytest.fixture
def orthonormal_design():
    """Square orthonormal 6 x 6 matrix wearing the N=2 layout"""
    q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((6, 6)))
    layout = ColumnLayout(2)
    return ExpandedDesign(data=q, layout=layout, norms=np.ones(layout.l), normalized=True)


@pytest.fixture
def bayes_dataset():
    spec = BayesModelSpec(n=6, m=220, noise_var=1e-4, priors=GroupPriorSet(), seed=5)
    return gen_bayes_dataset(spec, k_test=20)


@pytest.fixture
def sinusoid_dataset():
    spec = SinusoidSpec(n=6, m=80, seed=9, shared_phase=True)
    return gen_sinusoid_dataset(spec, k_test=10)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "runs"
    path.mkdir()
    return path
