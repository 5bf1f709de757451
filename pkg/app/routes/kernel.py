"""
Quadratic kernel expansion routes
"""
import numpy as np
from fastapi import APIRouter, HTTPException, status

from app.exceptions import QkampError
from app.models import FeatureMatrix
from app.schemas import ColumnCountResponse, ExpandRequest, ExpandResponse
from app.services.kernel_expansion import column_count, expand_quadratic, normalize_columns


router = APIRouter(prefix="/kernel", tags=["Kernel"])


def feature_matrix(rows) -> FeatureMatrix:
    """Request rows as a FeatureMatrix; ragged or non-finite rows are a 400"""
    try:
        return FeatureMatrix(np.asarray(rows, dtype=np.float64))
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


@router.get("/column-count/{n}", response_model=ColumnCountResponse)
def get_column_count(n: int):
    """Number of expanded columns L = 1 + 2N + N(N-1)/2"""
    try:
        return ColumnCountResponse(n=n, l=column_count(n))
    except QkampError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


@router.post("/expand", response_model=ExpandResponse)
def expand(request: ExpandRequest):
    """
    Expand raw feature rows

    - **features**: M rows of N raw features
    - **normalize**: Scale every column to unit l2 norm

    Returns the expanded matrix with column labels and norms
    """
    x = feature_matrix(request.features)
    try:
        design = expand_quadratic(x)
        if request.normalize:
            design = normalize_columns(design)
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    return ExpandResponse(
        rows=design.m,
        columns=design.l,
        normalized=design.normalized,
        labels=design.layout.labels(),
        norms=design.norms.tolist(),
        data=design.data.tolist(),
    )
