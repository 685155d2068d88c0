import logging

import numpy as np
from fastapi import APIRouter, HTTPException, Request, status

from densmat.models import ErrorResponse, ModelInfoResponse, PredictRequest, PredictResponse
from densmat.services import model_service
from densmat.storage import model_kind

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/api/v1",
    tags=["Prediction"],
    responses={
        503: {"model": ErrorResponse, "description": "No model loaded"},
        422: {"model": ErrorResponse, "description": "Invalid request"},
    },
)


def _loaded_model(request: Request):
    model = request.app.state.model
    if model is None:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail="No model loaded")
    return model


@router.get("/model", response_model=ModelInfoResponse)
async def model_info(request: Request):
    """
    Describe the served model: kind, dimensions, rank and hyperparameters
    """
    return model_service.describe(_loaded_model(request))


@router.post("/predict", response_model=PredictResponse, response_model_exclude_none=True)
async def predict(request: Request, body: PredictRequest):
    """
    Predict for a batch of points

    **Returns** (by model kind):
    - dmkde: densities
    - dmkdc: posteriors and labels
    - qmc: output distributions and labels
    - qmr: distributions, y_hat, variance and a 95% interval
    """
    model = _loaded_model(request)
    X = np.asarray(body.points, dtype=np.float64)
    logger.info(f"Predicting {X.shape[0]} points with {model_kind(model)}")
    return model_service.predict(model, X)
