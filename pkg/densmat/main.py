import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from densmat.config import settings
from densmat.exceptions import DataError, DensmatError, InvalidArgumentError, NumericFailureError
from densmat.models import ErrorResponse, HealthResponse
from densmat.routers import predict_router
from densmat.storage import load_model

logging.basicConfig(
    level=settings.log_level,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="densmat API",
    description="Predictions from a saved density-matrix model",
    version=settings.app_version,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.state.model = None

app.include_router(predict_router)


def _error_body(error: DensmatError) -> dict:
    detail = None
    if isinstance(error, NumericFailureError) and error.diagnostics:
        detail = {k: str(v) for k, v in error.diagnostics.items()}
    elif isinstance(error, DataError) and error.line is not None:
        detail = {"line": error.line}
    return ErrorResponse(error=type(error).__name__, message=str(error), detail=detail).model_dump()


@app.exception_handler(InvalidArgumentError)
async def invalid_argument_handler(request: Request, exc: InvalidArgumentError):
    return JSONResponse(status_code=422, content=_error_body(exc))


@app.exception_handler(DataError)
async def data_error_handler(request: Request, exc: DataError):
    return JSONResponse(status_code=400, content=_error_body(exc))


@app.exception_handler(NumericFailureError)
async def numeric_failure_handler(request: Request, exc: NumericFailureError):
    logger.error(f"Numeric failure while serving: {exc}")
    return JSONResponse(status_code=500, content=_error_body(exc))


@app.get("/")
async def root():
    """
    Root endpoint - Welcome message
    """
    return {
        "message": f"Welcome to {settings.app_name}",
        "version": settings.app_version,
        "documentation": "/docs",
        "endpoints": {
            "health": "/health",
            "model": "/api/v1/model",
            "predict": "/api/v1/predict",
        },
    }


@app.get("/health", response_model=HealthResponse)
async def health_check():
    """
    Health check endpoint; degraded while no model is loaded
    """
    loaded = app.state.model is not None
    return HealthResponse(
        status="healthy" if loaded else "degraded",
        service=settings.app_name,
        version=settings.app_version,
        model_loaded=loaded,
    )


@app.on_event("startup")
async def startup_event():
    logger.info(f"{settings.app_name} API starting (environment: {settings.environment})")
    if app.state.model is None and settings.model_path:
        try:
            app.state.model = load_model(settings.model_path)
        except DensmatError as e:
            logger.error(f"Failed to load model {settings.model_path}: {e}")
    if app.state.model is None:
        logger.warning("No model loaded; predictions will return 503")
