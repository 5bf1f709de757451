"""
Tests for the HTTP API (app/main.py and app/routes/)
"""
import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.services.synthetic_data import gen_features


@pytest.fixture
def client():
    with TestClient(app) as client:
        yield client


class TestHealth:

    def test_root(self, client):
        response = client.get("/")
        assert response.status_code == 200
        assert response.json()["status"] == "healthy"

    def test_health_lists_solvers(self, client):
        assert "eb_amp" in client.get("/health").json()["solvers"]


class TestKernelRoutes:

    def test_column_count(self, client):
        response = client.get("/api/kernel/column-count/30")
        assert response.status_code == 200
        assert response.json() == {"n": 30, "l": 496}

    def test_column_count_rejects_zero(self, client):
        assert client.get("/api/kernel/column-count/0").status_code == 400

    def test_expand(self, client):
        response = client.post("/api/kernel/expand", json={"features": [[1.0, 2.0], [3.0, 4.0]]})
        assert response.status_code == 200
        body = response.json()
        assert body["columns"] == 6
        assert body["labels"] == ["dc", "linear(0)", "linear(1)", "quadratic(0)", "quadratic(1)", "cross(0,1)"]
        assert body["data"][1] == [1.0, 3.0, 4.0, 9.0, 16.0, 12.0]
        assert not body["normalized"]

    def test_expand_normalized(self, client):
        response = client.post("/api/kernel/expand", json={"features": [[1.0, 2.0], [3.0, 4.0]], "normalize": True})
        body = response.json()
        assert body["normalized"]
        assert body["norms"][0] == pytest.approx(np.sqrt(2))
        np.testing.assert_allclose(np.linalg.norm(np.array(body["data"]), axis=0), 1.0)

    def test_ragged_rows(self, client):
        response = client.post("/api/kernel/expand", json={"features": [[1.0, 2.0], [3.0]]})
        assert response.status_code == 400

    def test_degenerate_column(self, client):
        response = client.post("/api/kernel/expand", json={"features": [[0.0, 1.0], [0.0, 2.0]], "normalize": True})
        assert response.status_code == 400
        assert "linear(0)" in response.json()["detail"]


class TestSpectrumRoutes:

    def test_predict(self, client):
        response = client.get("/api/spectrum/predict", params={"m": 1000, "n": 10})
        assert response.status_code == 200
        assert response.json()["sigma1_sq_pred"] == pytest.approx(4.39, abs=0.005)

    def test_predict_validates_query(self, client):
        assert client.get("/api/spectrum/predict", params={"m": 0, "n": 10}).status_code == 422

    def test_empirical(self, client):
        features = gen_features(40, 3, seed=0).data.tolist()
        body = client.post("/api/spectrum/empirical", json={"features": features}).json()
        assert body["l"] == 10
        assert len(body["singular_values"]) == 10
        assert sum(v ** 2 for v in body["singular_values"]) == pytest.approx(10.0, rel=1e-9)


class TestSolverRoutes:

    def test_pseudoinverse(self, client, bayes_dataset):
        payload = {
            "features": bayes_dataset.x_train.data.tolist(),
            "targets": bayes_dataset.y_train.tolist(),
            "solver": "pseudoinverse",
        }
        response = client.post("/api/solvers/solve", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert body["success"] and body["converged"]
        np.testing.assert_allclose(body["coefficients"]["linear"], bayes_dataset.truth.linear, atol=0.05)

    def test_lasso_with_fixed_lambda(self, client, bayes_dataset):
        payload = {
            "features": bayes_dataset.x_train.data.tolist(),
            "targets": bayes_dataset.y_train.tolist(),
            "solver": "lasso",
            "lasso": {"lambdas": [0.01, 0.01, 0.01, 0.01]},
        }
        body = client.post("/api/solvers/solve", json=payload).json()
        assert body["lambda_used"] == 0.01
        assert len(body["coefficients"]["cross"]) == 15

    def test_amp(self, client, sinusoid_dataset):
        payload = {
            "features": sinusoid_dataset.x_train.data.tolist(),
            "targets": sinusoid_dataset.y_train.tolist(),
            "solver": "amp",
            "amp": {"max_iters": 20},
        }
        response = client.post("/api/solvers/solve", json=payload)
        assert response.status_code == 200
        assert response.json()["iterations_used"] <= 20

    def test_target_length_mismatch(self, client):
        payload = {"features": [[1.0, 2.0], [3.0, 5.0], [2.0, 1.0]], "targets": [1.0], "solver": "pseudoinverse"}
        assert client.post("/api/solvers/solve", json=payload).status_code == 400

    def test_unknown_solver(self, client):
        payload = {"features": [[1.0]], "targets": [1.0], "solver": "ridge"}
        assert client.post("/api/solvers/solve", json=payload).status_code == 422
