"""
Singular-value routes
"""
from fastapi import APIRouter, HTTPException, Query, status

from app.exceptions import QkampError
from app.routes.kernel import feature_matrix
from app.schemas import EmpiricalSpectrumRequest, EmpiricalSpectrumResponse, SpectrumPredictionResponse
from app.services.kernel_expansion import column_count, expand_quadratic, normalize_columns
from app.services.spectral_analysis import empirical_spectrum, predict_sigma1_sq


router = APIRouter(prefix="/spectrum", tags=["Spectrum"])


@router.get("/predict", response_model=SpectrumPredictionResponse)
def predict(m: int = Query(..., ge=1), n: int = Query(..., ge=1)):
    """Predicted squared top singular value of the normalized M x L design"""
    return SpectrumPredictionResponse(m=m, n=n, l=column_count(n), sigma1_sq_pred=predict_sigma1_sq(m, n))


@router.post("/empirical", response_model=EmpiricalSpectrumResponse)
def empirical(request: EmpiricalSpectrumRequest):
    """Singular values of the normalized expansion of the given rows"""
    x = feature_matrix(request.features)
    try:
        design = normalize_columns(expand_quadratic(x))
        singular_values = empirical_spectrum(design)
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except QkampError as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Spectrum computation failed: {str(e)}"
        )

    return EmpiricalSpectrumResponse(
        m=x.m,
        n=x.n,
        l=design.l,
        singular_values=singular_values.tolist(),
        sigma1_sq_empirical=float(singular_values[0] ** 2),
        sigma1_sq_pred=predict_sigma1_sq(x.m, x.n),
    )
