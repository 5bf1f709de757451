"""
File formats: feature CSV/binary matrices, dataset directories, priors JSON,
solver results and report tables
"""
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.exceptions import StorageError
from app.models import CvResult, Dataset, FeatureMatrix, GroupedCoefficients, SolverResult, TraceRecord
from app.schemas import GroupPriorSet


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# magic, then uint64 M and N, then M*N float64 (all little-endian, row-major)
MATRIX_MAGIC = b"QKMAT\x00\x00\x01"
_HEADER_DTYPE = np.dtype("<u8")
_VALUE_DTYPE = np.dtype("<f8")

TRACE_COLUMNS = ["iteration", "residual_norm", "sigma2_eff", "coeff_mse", "test_mse"]


# Matrices
def read_matrix_csv(path: PathLike) -> np.ndarray:
    """Headerless comma-separated matrix, one row per line"""
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as error:
        raise StorageError(f"Cannot parse matrix CSV {path}: {error}") from error


def write_matrix_csv(path: PathLike, data: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(data), delimiter=",", fmt="%.17g")


def read_features_csv(path: PathLike) -> FeatureMatrix:
    return FeatureMatrix(read_matrix_csv(path))


def read_vector_csv(path: PathLike) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.float64)
    except ValueError as error:
        raise StorageError(f"Cannot parse vector CSV {path}: {error}") from error


def write_vector_csv(path: PathLike, values: np.ndarray) -> None:
    np.savetxt(path, np.asarray(values, dtype=np.float64).reshape(-1, 1), fmt="%.17g")


def write_matrix_binary(path: PathLike, data: np.ndarray) -> None:
    data = np.ascontiguousarray(np.atleast_2d(data), dtype=_VALUE_DTYPE)
    with open(path, "wb") as handle:
        handle.write(MATRIX_MAGIC)
        handle.write(np.array(data.shape, dtype=_HEADER_DTYPE).tobytes())
        handle.write(data.tobytes(order="C"))


def read_matrix_binary(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    header_end = len(MATRIX_MAGIC) + 2 * _HEADER_DTYPE.itemsize
    if len(raw) < header_end or raw[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise StorageError(f"{path} is not a binary matrix file")
    m, n = (int(v) for v in np.frombuffer(raw, dtype=_HEADER_DTYPE, count=2, offset=len(MATRIX_MAGIC)))
    expected = header_end + m * n * _VALUE_DTYPE.itemsize
    if len(raw) != expected:
        raise StorageError(f"{path}: header says {m}x{n} but payload has {len(raw) - header_end} bytes")
    return np.frombuffer(raw, dtype=_VALUE_DTYPE, offset=header_end).reshape(m, n).copy()


def read_features(path: PathLike) -> FeatureMatrix:
    """Feature matrix from CSV or, by magic bytes, the binary format"""
    with open(path, "rb") as handle:
        head = handle.read(len(MATRIX_MAGIC))
    if head == MATRIX_MAGIC:
        return FeatureMatrix(read_matrix_binary(path))
    return read_features_csv(path)


# JSON
def dumps_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(path: PathLike, payload: Any) -> None:
    Path(path).write_text(dumps_json(payload), encoding="utf-8")


def read_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise StorageError(f"Invalid JSON in {path}: {error}") from error


def append_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def save_priors(path: PathLike, priors: GroupPriorSet) -> None:
    write_json(path, priors.model_dump(mode="json"))


def load_priors(path: PathLike) -> GroupPriorSet:
    return GroupPriorSet.model_validate(read_json(path))


# Datasets
def save_dataset(directory: PathLike, dataset: Dataset, spec: Optional[Dict[str, Any]] = None) -> Path:
    """x_train.csv, y_train.csv, x_test.csv, y_test.csv, optional truth.json and spec.json"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(directory / "x_train.csv", dataset.x_train.data)
    write_vector_csv(directory / "y_train.csv", dataset.y_train)
    write_matrix_csv(directory / "x_test.csv", dataset.x_test.data)
    write_vector_csv(directory / "y_test.csv", dataset.y_test)
    if dataset.truth is not None:
        write_json(directory / "truth.json", dataset.truth.to_dict())
    if spec is not None:
        write_json(directory / "spec.json", spec)
    logger.info("Saved dataset to %s", directory)
    return directory


def load_dataset(directory: PathLike) -> Dataset:
    directory = Path(directory)
    missing = [name for name in ("x_train.csv", "y_train.csv", "x_test.csv", "y_test.csv")
               if not (directory / name).exists()]
    if missing:
        raise StorageError(f"Dataset directory {directory} is missing {', '.join(missing)}")
    truth_path = directory / "truth.json"
    return Dataset(
        x_train=read_features_csv(directory / "x_train.csv"),
        y_train=read_vector_csv(directory / "y_train.csv"),
        x_test=read_features_csv(directory / "x_test.csv"),
        y_test=read_vector_csv(directory / "y_test.csv"),
        truth=GroupedCoefficients.from_dict(read_json(truth_path)) if truth_path.exists() else None,
    )


# Reports
def trace_frame(trace: Sequence[TraceRecord]) -> pd.DataFrame:
    columns = list(TRACE_COLUMNS)
    if any(record.objective is not None for record in trace):
        columns.append("objective")
    return pd.DataFrame([{name: getattr(record, name) for name in columns} for record in trace], columns=columns)


def write_trace_csv(path: PathLike, trace: Sequence[TraceRecord]) -> None:
    trace_frame(trace).to_csv(path, index=False, lineterminator="\n")


def write_cv_curve_csv(path: PathLike, cv: CvResult) -> None:
    frame = pd.DataFrame({
        "lambda": cv.lambdas,
        "mean_val_mse": cv.mean_mse,
        "std_val_mse": cv.std_mse,
    })
    frame.to_csv(path, index=False, lineterminator="\n")


def write_table_csv(path: PathLike, rows: List[Dict[str, Any]], columns: Sequence[str]) -> None:
    pd.DataFrame(rows, columns=list(columns)).to_csv(path, index=False, lineterminator="\n")


def solver_result_to_dict(result: SolverResult, include_trace: bool = True) -> Dict[str, Any]:
    """JSON view of a SolverResult; wall-clock time is left out so output is reproducible"""
    payload = {
        "solver": result.solver,
        "iterations_used": result.iterations_used,
        "converged": result.converged,
        "diverged": result.diverged,
        "theta_hat_normalized": result.theta_hat_normalized.tolist(),
        "theta_hat_original": result.theta_hat_original.to_dict(),
        "diagnostics": result.diagnostics,
    }
    if include_trace:
        payload["trace"] = [asdict(record) for record in result.trace]
    return payload
